#pragma once

#include <stdexcept>
#include <string>

namespace mgdet {

// Bad input data: unreadable files, malformed headers, shape mismatches.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Homography consensus too small to trust; callers decide whether to skip
// the frame or abort.
class AlignmentFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace mgdet
