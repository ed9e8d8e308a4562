#pragma once

#include <stdexcept>
#include <string>

namespace tierfem {

/// Rejected user input: malformed configs, invalid geometry, bad files.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative solver failure (breakdown, iteration cap, non-finite values).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The fast memory tier cannot hold a requested allocation.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Illegal residency transition in the partition ledger.
class TransferError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tierfem
