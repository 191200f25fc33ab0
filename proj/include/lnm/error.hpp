#pragma once

#include <stdexcept>
#include <string>

namespace lnm {

// Each subclass maps to one CLI exit code (see tools/lnm_ensemble.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, std::string patient_id = {}, int repeat_index = -1)
      : Error(what), patient_id_(std::move(patient_id)), repeat_index_(repeat_index) {}

  const std::string& patient_id() const noexcept { return patient_id_; }
  int repeat_index() const noexcept { return repeat_index_; }

 private:
  std::string patient_id_;
  int repeat_index_;
};

class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace lnm
