#include "fedfreeze/federation.hpp"

#include "fedfreeze/serialize.hpp"

#include <chrono>
#include <numeric>

namespace fedfreeze {

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError(field + ": " + why);
  };
  if (rounds < 1) fail("train.rounds", "must be positive");
  if (local_epochs < 1) fail("train.local_epochs", "must be positive");
  if (batch_size < 1) fail("train.batch_size", "must be positive");
  if (!(learning_rate >= 0.0)) fail("train.learning_rate", "must be non-negative");
  if (!(prox_mu >= 0.0)) fail("train.prox_mu", "must be non-negative");
  if (!(tau > 0.0 && tau < 100.0)) fail("freezing.tau", "must be in (0,100)");
  if (patience < 1) fail("freezing.patience", "must be positive");
  if (num_clients < 1) fail("train.num_clients", "must be positive");
  if (!(energy.kwh_per_flop >= 0.0)) fail("energy.kwh_per_flop", "must be non-negative");
  if (!(energy.carbon_intensity >= 0.0)) fail("energy.carbon_intensity", "must be non-negative");
}

std::uint64_t epoch_seed(std::uint64_t run_seed, int client_id, int round, int epoch) {
  return mix_seed({run_seed, 0xc11e17ULL, static_cast<std::uint64_t>(client_id),
                   static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(epoch)});
}

std::pair<Tensor, Tensor> make_batch(std::span<const PairedSample> samples) {
  if (samples.empty()) throw ContractError("make_batch: no samples");
  const Index h = samples[0].source.rows(), w = samples[0].source.cols();
  const Index B = static_cast<Index>(samples.size());
  Tensor src({B, 1, h, w}), tgt({B, 1, h, w});
  for (Index b = 0; b < B; ++b) {
    const auto& s = samples[static_cast<std::size_t>(b)];
    if (s.source.rows() != h || s.source.cols() != w || s.target.rows() != h || s.target.cols() != w) {
      throw ShapeError("make_batch: samples differ in size");
    }
    src.as_matrix(h, w, b * h * w) = s.source;
    tgt.as_matrix(h, w, b * h * w) = s.target;
  }
  return {std::move(src), std::move(tgt)};
}

double train_epoch(const Network& net, ParamSet& params, OptimizerState& opt,
                   std::span<const PairedSample> data, const TrainConfig& cfg,
                   const FreezeMask& mask, const ParamSet* anchor, std::uint64_t seed,
                   FlopCount* flops) {
  if (data.empty()) throw ContractError("train_epoch: empty dataset");
  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  std::optional<ProxTerm> prox;
  if (anchor && cfg.prox_mu > 0.0) prox = ProxTerm{cfg.prox_mu, anchor};

  double loss_sum = 0.0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  std::vector<PairedSample> batch;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    batch.clear();
    for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
      batch.push_back(augment(data[order[i]], cfg.augment, rng));
    }
    auto [x, y] = make_batch(batch);
    auto fwd = forward(net, params, x);
    LossResult loss = loss_and_grad(fwd.prediction, y, params, mask, prox);
    Gradients grads = backward(fwd.tape, loss.output_grad, mask);
    accumulate(grads, loss.prox_grads);
    adam_step(params, grads, opt, mask);

    loss_sum += loss.loss * static_cast<double>(batch.size());
    if (flops) *flops += flops_for(net.config(), static_cast<Index>(batch.size()), mask);
  }
  return loss_sum / static_cast<double>(data.size());
}

LocalTrainResult local_train(const Network& net, ClientState& client, const ParamSet& anchor,
                             const TrainConfig& cfg, int round) {
  if (client.data.empty()) {
    throw ContractError("local_train: client " + std::to_string(client.client_id) + " has no data");
  }
  if (!same_structure(client.params, anchor)) {
    throw ContractError("local_train: client parameters do not match the anchor");
  }
  const auto t0 = std::chrono::steady_clock::now();
  FlopCount flops;
  double loss = 0.0;
  for (int e = 0; e < cfg.local_epochs; ++e) {
    loss = train_epoch(net, client.params, client.opt, client.data, cfg, client.mask, &anchor,
                       epoch_seed(cfg.seed, client.client_id, round, e), &flops);
  }
  LocalTrainResult r;
  r.train_loss = loss;
  r.ledger.flops_forward = flops.forward;
  r.ledger.flops_backward = flops.backward;
  r.ledger.params_updated = (client.mask.encoder ? 0 : param_count(client.params, Partition::encoder)) +
                            (client.mask.decoder ? 0 : param_count(client.params, Partition::decoder));
  r.ledger.apply_energy(cfg.energy);
  r.ledger.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

ParamSet aggregate_fedavg(std::span<const ParamSet> client_params, std::span<const Index> sample_counts,
                          const ParamSet* frozen_base) {
  if (client_params.empty()) throw ContractError("aggregate: no client parameters");
  if (client_params.size() != sample_counts.size()) {
    throw ContractError("aggregate: one sample count per client required");
  }
  double total = 0.0;
  for (Index n : sample_counts) {
    if (n <= 0) throw ContractError("aggregate: sample counts must be positive");
    total += static_cast<double>(n);
  }

  ParamSet out = frozen_base ? *frozen_base : client_params.front();
  for (auto& layer : out.layers()) {
    if (frozen_base && layer.group == Group::encoder) continue;
    // Mean taken as an offset from the first client so identical inputs average exactly.
    const LayerParams* ref = nullptr;
    Tensor w(layer.weight.shape()), b(layer.bias.shape());
    for (std::size_t k = 0; k < client_params.size(); ++k) {
      const LayerParams* src = client_params[k].find(layer.id);
      if (!src || src->group != layer.group || !same_shape(src->weight, w) || !same_shape(src->bias, b)) {
        throw ContractError("aggregate: partition mismatch for client " + std::to_string(k) +
                            " at layer '" + layer.id + "'");
      }
      if (!ref) ref = src;
      const double weight = static_cast<double>(sample_counts[k]) / total;
      w.data() += weight * (src->weight.data() - ref->weight.data());
      b.data() += weight * (src->bias.data() - ref->bias.data());
    }
    w.data() += ref->weight.data();
    b.data() += ref->bias.data();
    layer.weight = std::move(w);
    layer.bias = std::move(b);
  }
  if (!frozen_base) {
    for (std::size_t k = 1; k < client_params.size(); ++k) {
      if (client_params[k].layers().size() != out.layers().size()) {
        throw ContractError("aggregate: client " + std::to_string(k) + " has a different partition");
      }
    }
  }
  return out;
}

ServerState make_server(const ParamSet& initial, const TrainConfig& cfg) {
  ServerState s;
  s.global = initial;
  s.controller = FreezeController(cfg.tau, cfg.patience, cfg.freezing == FreezingMode::adaptive);
  return s;
}

std::vector<ClientState> make_clients(const ParamSet& initial, std::vector<std::vector<PairedSample>> silos,
                                      const TrainConfig& cfg) {
  std::vector<ClientState> clients;
  for (std::size_t k = 0; k < silos.size(); ++k) {
    if (silos[k].empty()) throw ContractError("client " + std::to_string(k) + " has an empty dataset");
    clients.push_back({static_cast<int>(k), initial, make_adam(initial, cfg.learning_rate),
                       std::move(silos[k]), FreezeMask::none()});
  }
  return clients;
}

RoundRecord run_round(const Network& net, ServerState& server, std::vector<ClientState>& clients,
                      const TrainConfig& cfg) {
  if (server.round >= cfg.rounds) throw ContractError("run_round: all rounds already completed");
  if (clients.empty()) throw ContractError("run_round: no clients");
  RoundRecord rec;
  rec.round = server.round + 1;
  const bool frozen = server.frozen;
  const FreezeMask mask = frozen ? FreezeMask::encoder_only() : FreezeMask::none();

  // Broadcast. The first broadcast after a freeze still ships the final encoder.
  const bool full_broadcast = !frozen || server.encoder_broadcast_pending;
  const ParamSet decoder_part = server.global.subset(Partition::decoder);
  const std::int64_t downlink =
      wire_size(server.global, full_broadcast ? Partition::all : Partition::decoder);
  for (auto& c : clients) {
    if (full_broadcast) {
      c.params = server.global;
    } else {
      c.params.assign_from(decoder_part);
    }
    c.mask = mask;
  }
  server.encoder_broadcast_pending = false;

  const ParamSet anchor = server.global;
  std::vector<ParamSet> uploads;
  std::vector<Index> counts;
  for (auto& c : clients) {
    LocalTrainResult r = local_train(net, c, anchor, cfg, rec.round);
    uploads.push_back(frozen ? c.params.subset(Partition::decoder) : c.params);
    counts.push_back(c.sample_count());
    r.ledger.bytes_downlink = downlink;
    r.ledger.bytes_uplink = wire_size(uploads.back(), Partition::all);
    rec.clients.push_back({c.client_id, r.train_loss, r.ledger});
  }

  ParamSet aggregated = aggregate_fedavg(uploads, counts, frozen ? &server.global : nullptr);
  server.global = std::move(aggregated);
  server.round = rec.round;

  if (!frozen) {
    const FreezeDecision d = server.controller.observe(encoder_snapshot(server.global, rec.round));
    const DriftRecord& dr = server.controller.history().back();
    rec.drift = dr.drift;
    rec.rho_percent = dr.rho_percent;
    if (d == FreezeDecision::freeze_now) {
      server.frozen = true;
      server.encoder_broadcast_pending = true;
      rec.froze_this_round = true;
      for (auto& c : clients) c.mask = FreezeMask::encoder_only();
    }
  }
  rec.consecutive_hits = server.controller.state().consecutive_hits;
  rec.frozen = server.frozen;
  return rec;
}

FederationResult run_federation(const TrainConfig& cfg, std::vector<std::vector<PairedSample>> silos,
                                const ModelConfig& model) {
  cfg.validate();
  if (static_cast<int>(silos.size()) != cfg.num_clients) {
    throw ConfigError("train.num_clients: " + std::to_string(cfg.num_clients) + " clients but " +
                      std::to_string(silos.size()) + " silos");
  }
  const Network net(model);
  FederationResult result;
  result.initial_params = build_model(model);
  ServerState server = make_server(result.initial_params, cfg);
  auto clients = make_clients(result.initial_params, std::move(silos), cfg);
  for (int r = 0; r < cfg.rounds; ++r) {
    result.rounds.push_back(run_round(net, server, clients, cfg));
  }
  result.final_params = server.global;
  result.freeze_round = server.controller.state().freeze_round;
  result.drift_log = server.controller.history();
  return result;
}

}  // namespace fedfreeze
