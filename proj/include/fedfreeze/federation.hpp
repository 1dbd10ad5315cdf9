#pragma once

#include "fedfreeze/adam.hpp"
#include "fedfreeze/data_synth.hpp"
#include "fedfreeze/freeze_controller.hpp"
#include "fedfreeze/ledger.hpp"
#include "fedfreeze/network.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fedfreeze {

enum class FreezingMode { off, adaptive };

struct TrainConfig {
  int rounds = 25;
  int local_epochs = 1;
  int batch_size = 8;
  double learning_rate = 1e-4;
  double prox_mu = 3.0;
  FreezingMode freezing = FreezingMode::adaptive;
  double tau = 5.0;
  int patience = 3;
  std::uint64_t seed = 0;
  int num_clients = 4;
  AugmentSpec augment;
  EnergyModel energy;

  /// Throws ConfigError naming the field. learning_rate and prox_mu may be zero.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct ClientState {
  int client_id = 0;
  ParamSet params;
  OptimizerState opt;
  std::vector<PairedSample> data;
  FreezeMask mask;

  Index sample_count() const { return static_cast<Index>(data.size()); }
};

struct ServerState {
  ParamSet global;
  int round = 0;
  FreezeController controller{5.0, 3};
  bool frozen = false;
  bool encoder_broadcast_pending = false;
};

struct ClientRound {
  int client_id = 0;
  double train_loss = 0.0;
  LedgerEntry ledger;
};

struct RoundRecord {
  int round = 0;
  std::vector<ClientRound> clients;
  std::optional<double> drift;
  std::optional<double> rho_percent;
  int consecutive_hits = 0;
  bool frozen = false;
  bool froze_this_round = false;
};

/// Seed for one client's local epoch; drives shuffling and augmentation.
std::uint64_t epoch_seed(std::uint64_t run_seed, int client_id, int round, int epoch);

/// Stacks samples into (B,1,H,W) source and target tensors.
std::pair<Tensor, Tensor> make_batch(std::span<const PairedSample> samples);

/// One pass over `data` in shuffled mini-batches. With a non-null anchor and mu > 0 the
/// FedProx term is added. Returns the sample-weighted mean loss; FLOPs are added to `flops`.
double train_epoch(const Network& net, ParamSet& params, OptimizerState& opt,
                   std::span<const PairedSample> data, const TrainConfig& cfg,
                   const FreezeMask& mask, const ParamSet* anchor, std::uint64_t seed,
                   FlopCount* flops = nullptr);

struct LocalTrainResult {
  double train_loss = 0.0;
  LedgerEntry ledger;
};

/// Runs cfg.local_epochs on the client's data with FedProx anchored at `anchor`.
/// Fills compute fields of the ledger; communication bytes are set by the caller.
LocalTrainResult local_train(const Network& net, ClientState& client, const ParamSet& anchor,
                             const TrainConfig& cfg, int round);

/// Sample-weighted element-wise mean in input order. When `frozen_base` is given, its
/// encoder layers are carried forward and only decoder layers are averaged.
ParamSet aggregate_fedavg(std::span<const ParamSet> client_params, std::span<const Index> sample_counts,
                          const ParamSet* frozen_base = nullptr);

ServerState make_server(const ParamSet& initial, const TrainConfig& cfg);
std::vector<ClientState> make_clients(const ParamSet& initial, std::vector<std::vector<PairedSample>> silos,
                                      const TrainConfig& cfg);

/// broadcast -> local training -> aggregation -> freeze monitoring.
RoundRecord run_round(const Network& net, ServerState& server, std::vector<ClientState>& clients,
                      const TrainConfig& cfg);

struct FederationResult {
  std::vector<RoundRecord> rounds;
  ParamSet initial_params;
  ParamSet final_params;
  std::optional<int> freeze_round;
  std::vector<DriftRecord> drift_log;
};

/// Trains on preprocessed silos (client id = silo index) for cfg.rounds rounds.
FederationResult run_federation(const TrainConfig& cfg, std::vector<std::vector<PairedSample>> silos,
                                const ModelConfig& model);

}  // namespace fedfreeze
