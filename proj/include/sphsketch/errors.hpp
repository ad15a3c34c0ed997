#pragma once

#include <stdexcept>
#include <string>

namespace sphsketch {

// Malformed input data (point files, label files, model files).
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A required file (design, point set, config) does not exist.
class missing_file_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment configuration.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Factorization failure, non-finite result, or a matrix over the memory budget.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class size_error : public numerical_error {
 public:
  using numerical_error::numerical_error;
};

}  // namespace sphsketch
