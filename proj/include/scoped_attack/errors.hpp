#pragma once

#include <stdexcept>
#include <string>

namespace scoped_attack {

// Malformed container or file contents: bad magic, truncation, out-of-range bytes.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// IDX header declares image dimensions other than 28x28.
class UnsupportedShape : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model file carries a version this build does not know.
class UnsupportedVersion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Photo contains no foreground after binarization.
class EmptyForeground : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite value reached a numeric routine.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Target vector is not a valid one-hot encoding.
class InvalidTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training requested on an empty dataset.
class EmptyData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Loaded or constructed model violates its own invariants.
class ModelCorrupt : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Targeted attack mode requested without a target class.
class MissingTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Attack where source and target coincide, or the image already carries the target class.
class DegenerateAttack : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sample set has rank below the requested number of principal components.
class DegenerateBasis : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scoped_attack
