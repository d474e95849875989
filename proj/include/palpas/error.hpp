#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace palpas {

enum class ErrorKind {
  invalid_input,
  parse,
  validation,
  format,
  authentication,
  corruption,
  enrollment,
  not_found,
  no_account,
  account_exists,
  policy_missing,
  unsatisfiable_policy,
  state,
  protocol,
  network,
  io,
  randomness_unavailable,
};

std::string_view to_string(ErrorKind kind);

// Messages must never carry secret material; they end up on stderr and in
// wire error bodies.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace palpas
