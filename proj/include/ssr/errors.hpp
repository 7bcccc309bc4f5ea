#pragma once

#include <stdexcept>
#include <string>

namespace ssr {

/// Missing, unreadable, or malformed input data (files, datasets, checkpoints).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ssr
