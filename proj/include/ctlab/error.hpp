#pragma once

#include <stdexcept>
#include <string>

namespace ctlab {

/// Precondition broken by the caller (bad arity, token out of range, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A table or frontier would exceed the configured size budget.
class BudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Linear constraints admit no feasible point.
class Infeasible : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractViolation(what);
}

/// Default cap on dense table entries; the CTLAB_BUDGET env var overrides it.
std::size_t table_budget();

}  // namespace ctlab
