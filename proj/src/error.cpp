#include "palpas/error.hpp"

namespace palpas {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid_input";
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::format: return "format";
    case ErrorKind::authentication: return "authentication";
    case ErrorKind::corruption: return "corruption";
    case ErrorKind::enrollment: return "enrollment";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::no_account: return "no_account";
    case ErrorKind::account_exists: return "account_exists";
    case ErrorKind::policy_missing: return "policy_missing";
    case ErrorKind::unsatisfiable_policy: return "unsatisfiable_policy";
    case ErrorKind::state: return "state";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::network: return "network";
    case ErrorKind::io: return "io";
    case ErrorKind::randomness_unavailable: return "randomness_unavailable";
  }
  return "unknown";
}

}  // namespace palpas
