#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dopf {

class SubproblemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major H x T (or buses x T) block.
using Block = std::vector<std::vector<double>>;

Block zero_block(int rows, int cols);

enum class FairnessMode { kNone, kEgalitarian, kProportional, kUniformDynamic };

FairnessMode parse_fairness(const std::string& s);
std::string to_string(FairnessMode mode);

enum class Execution { kSerial, kParallel };

struct Penalties {
  double p = 1.0;
  double y = 1.0;
  double q = 1.0;
};

/// Public data a prosumer discloses when joining: where it connects and the
/// envelope of its grid exchange.
struct ProsumerRegistration {
  int id = 0;
  int bus = 0;
  double q_max = 0.0;   // kVAr
  double p_min = -15.0; // kW
  double p_max = 15.0;
};

/// Aggregator to prosumer message for one iteration: the network copies,
/// the local voltage and the multipliers of the active and curtailment
/// couplings.
struct ProsumerInbox {
  int id = 0;
  std::vector<double> p_hat;
  std::vector<double> y_hat;
  std::vector<double> v;  // per unit at the prosumer's bus
  std::vector<double> lambda_p;
  std::vector<double> lambda_y;
  double rho_p = 1.0;
  double rho_y = 1.0;
};

/// Prosumer to aggregator message: grid exchange, curtailment and the VVC
/// reactive output.
struct ProsumerReply {
  int id = 0;
  std::vector<double> p;
  std::vector<double> y;
  std::vector<double> q;
};

}  // namespace dopf
