#include "fedfreeze/experiment.hpp"
#include "fedfreeze/presets.hpp"
#include "fedfreeze/serialize.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace fedfreeze;
using namespace fedfreeze::testing;

namespace {

std::vector<std::vector<PairedSample>> small_silos(int count, int subjects = 6, Index size = 16) {
  std::vector<SiloConfig> cfgs;
  for (int k = 0; k < count; ++k) {
    SiloConfig s;
    s.silo_id = std::string(1, static_cast<char>('A' + k));
    s.n_subjects = subjects + k;
    s.height = 20 + 2 * k;
    s.width = 20;
    s.intensity_gain = 1.0 - 0.1 * k;
    s.bias_field_strength = 0.05 * k;
    s.noise_sigma = 0.01;
    s.seed = 100 + static_cast<std::uint64_t>(k);
    cfgs.push_back(s);
  }
  return prepare_silos(cfgs, size);
}

TrainConfig small_train(int clients, int rounds = 6) {
  TrainConfig t;
  t.rounds = rounds;
  t.batch_size = 4;
  t.learning_rate = 1e-3;
  t.num_clients = clients;
  t.seed = 11;
  t.augment = {10.0, 1, true};
  return t;
}

ParamSet random_params(const ModelConfig& c, Rng& rng) {
  ParamSet p = build_model(c);
  randomize(p, rng, 1.0);
  return p;
}

}  // namespace

TEST(Aggregate, OneClientReturnsItsParams) {
  Rng rng(1);
  const std::vector<ParamSet> one{random_params(four_layer_unet(), rng)};
  const std::vector<Index> n{7};
  EXPECT_TRUE(bit_identical(aggregate_fedavg(one, n), one[0]));
}

TEST(Aggregate, WeightedMeanExamples) {
  const auto cfg = four_layer_unet();
  ParamSet zero = build_model(cfg), four = zero, one = zero, three = zero;
  auto fill = [](ParamSet& p, double v) {
    for (auto& l : p.layers()) {
      l.weight.data().setConstant(v);
      l.bias.data().setConstant(v);
    }
  };
  fill(zero, 0);
  fill(four, 4);
  fill(one, 1);
  fill(three, 3);
  const std::vector<ParamSet> a{zero, four}, b{one, three};
  const std::vector<Index> eq{2, 2}, uneq{1, 3};
  const ParamSet mean_eq = aggregate_fedavg(a, eq), mean_uneq = aggregate_fedavg(b, uneq);
  for (const auto& l : mean_eq.layers()) EXPECT_EQ(l.weight.data().maxCoeff(), 2.0);
  for (const auto& l : mean_uneq.layers()) {
    EXPECT_EQ(l.weight.data().minCoeff(), 2.5);
    EXPECT_EQ(l.bias.data().maxCoeff(), 2.5);
  }
}

TEST(Aggregate, MatchesBruteForceOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(5));
    const auto cfg = single_conv(1 + static_cast<Index>(rng.below(2)), 1 + static_cast<Index>(rng.below(3)), 4);
    std::vector<ParamSet> clients;
    std::vector<Index> counts;
    for (int i = 0; i < k; ++i) {
      clients.push_back(random_params(cfg, rng));
      counts.push_back(1 + static_cast<Index>(rng.below(50)));
    }
    const ParamSet agg = aggregate_fedavg(clients, counts);
    double total = 0;
    for (Index n : counts) total += static_cast<double>(n);
    for (const auto& l : agg.layers()) {
      for (Index e = 0; e < l.weight.size(); ++e) {
        double expect = 0;
        for (int i = 0; i < k; ++i) expect += static_cast<double>(counts[i]) * clients[i].at(l.id).weight[e];
        EXPECT_NEAR(l.weight[e], expect / total, 1e-12);
      }
      for (Index e = 0; e < l.bias.size(); ++e) {
        double expect = 0;
        for (int i = 0; i < k; ++i) expect += static_cast<double>(counts[i]) * clients[i].at(l.id).bias[e];
        EXPECT_NEAR(l.bias[e], expect / total, 1e-12);
      }
    }
  }
}

TEST(Aggregate, ClientOrderIndependence) {
  Rng rng(8);
  const auto cfg = four_layer_unet();
  std::vector<ParamSet> clients;
  std::vector<Index> counts{3, 9, 4, 12};
  for (int i = 0; i < 4; ++i) clients.push_back(random_params(cfg, rng));
  const ParamSet a = aggregate_fedavg(clients, counts);
  std::vector<ParamSet> rev(clients.rbegin(), clients.rend());
  std::vector<Index> rcounts(counts.rbegin(), counts.rend());
  const ParamSet b = aggregate_fedavg(rev, rcounts);
  for (const auto& l : a.layers()) {
    EXPECT_LT((l.weight.data() - b.at(l.id).weight.data()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Aggregate, FrozenBaseCarriesEncoder) {
  Rng rng(9);
  const auto cfg = four_layer_unet();
  const ParamSet base = random_params(cfg, rng);
  std::vector<ParamSet> uploads{random_params(cfg, rng).subset(Partition::decoder),
                                random_params(cfg, rng).subset(Partition::decoder)};
  const std::vector<Index> n{1, 1};
  const ParamSet out = aggregate_fedavg(uploads, n, &base);
  for (const auto& id : base.encoder_ids()) EXPECT_TRUE(bit_identical(out.at(id).weight, base.at(id).weight));
  for (const auto& id : base.decoder_ids()) {
    EXPECT_EQ(out.at(id).weight[0], 0.5 * (uploads[0].at(id).weight[0] + uploads[1].at(id).weight[0]));
  }
}

TEST(Aggregate, Errors) {
  Rng rng(10);
  const std::vector<ParamSet> none;
  const std::vector<Index> nn;
  EXPECT_THROW(aggregate_fedavg(none, nn), ContractError);
  const std::vector<ParamSet> mixed{random_params(four_layer_unet(), rng), random_params(single_conv(1, 1, 8), rng)};
  const std::vector<Index> two{1, 1};
  EXPECT_THROW(aggregate_fedavg(mixed, two), ContractError);
  const std::vector<ParamSet> same{mixed[0], mixed[0]};
  const std::vector<Index> bad{1, 0};
  EXPECT_THROW(aggregate_fedavg(same, bad), ContractError);
}

TEST(LocalTrain, MuZeroSingleBatchEqualsCentralizedStep) {
  const auto model = make_preset("unet_concat", 16, 3);
  const Network net(model);
  TrainConfig cfg = small_train(1);
  cfg.prox_mu = 0.0;
  cfg.batch_size = 64;
  cfg.augment = {};
  auto silos = small_silos(1);
  const ParamSet initial = build_model(model);
  auto clients = make_clients(initial, silos, cfg);
  local_train(net, clients[0], initial, cfg, 1);

  ParamSet central = initial;
  OptimizerState opt = make_adam(central, cfg.learning_rate);
  std::vector<PairedSample> order = silos[0];
  Rng rng(epoch_seed(cfg.seed, 0, 1, 0));
  std::vector<std::size_t> idx(order.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx);
  std::vector<PairedSample> batch;
  for (auto i : idx) batch.push_back(order[i]);
  auto [x, y] = make_batch(batch);
  auto fwd = forward(net, central, x);
  const auto loss = loss_and_grad(fwd.prediction, y, central, FreezeMask::none());
  adam_step(central, backward(fwd.tape, loss.output_grad, FreezeMask::none()), opt, FreezeMask::none());
  EXPECT_TRUE(bit_identical(clients[0].params, central));
}

TEST(LocalTrain, ProximalTermIsInertOnFirstBatch) {
  const auto model = make_preset("unet_concat", 16, 3);
  const Network net(model);
  TrainConfig cfg = small_train(1);
  cfg.batch_size = 64;
  const ParamSet initial = build_model(model);
  auto with = make_clients(initial, small_silos(1), cfg);
  cfg.prox_mu = 0.0;
  auto without = make_clients(initial, small_silos(1), cfg);
  cfg.prox_mu = 3.0;
  local_train(net, with[0], initial, cfg, 1);
  cfg.prox_mu = 0.0;
  local_train(net, without[0], initial, cfg, 1);
  EXPECT_TRUE(bit_identical(with[0].params, without[0].params));
}

TEST(LocalTrain, LedgerUnderFrozenEncoder) {
  const auto model = make_preset("unet_concat", 16, 3);
  const Network net(model);
  const TrainConfig cfg = small_train(1);
  const ParamSet initial = build_model(model);
  auto clients = make_clients(initial, small_silos(1), cfg);
  clients[0].mask = FreezeMask::encoder_only();
  const auto r = local_train(net, clients[0], initial, cfg, 1);
  EXPECT_EQ(r.ledger.params_updated, param_count(initial, Partition::decoder));
  // 6 samples in batches of 4 and 2
  const auto f = flops_for(model, 6, FreezeMask::encoder_only());
  EXPECT_EQ(r.ledger.flops_forward, f.forward);
  EXPECT_EQ(r.ledger.flops_backward, f.backward);
  EXPECT_EQ(r.ledger.energy_kwh, static_cast<double>(f.forward + f.backward) * cfg.energy.kwh_per_flop);
  EXPECT_GE(r.ledger.wall_ms, 0.0);
  for (const auto& id : initial.encoder_ids()) EXPECT_TRUE(bit_identical(clients[0].params.at(id).weight, initial.at(id).weight));
}

TEST(LocalTrain, EmptyDatasetIsAnError) {
  const auto model = make_preset("unet_concat", 16, 3);
  const Network net(model);
  const ParamSet initial = build_model(model);
  ClientState c{0, initial, make_adam(initial, 1e-3), {}, FreezeMask::none()};
  EXPECT_THROW(local_train(net, c, initial, small_train(1), 1), ContractError);
  EXPECT_THROW(make_clients(initial, {{}}, small_train(1)), ContractError);
}

TEST(RunRound, SingleClientMuZeroGlobalEqualsClient) {
  const auto model = make_preset("unet_concat", 16, 3);
  const Network net(model);
  TrainConfig cfg = small_train(1);
  cfg.prox_mu = 0.0;
  const ParamSet initial = build_model(model);
  ServerState server = make_server(initial, cfg);
  auto clients = make_clients(initial, small_silos(1), cfg);
  run_round(net, server, clients, cfg);
  EXPECT_TRUE(bit_identical(server.global, clients[0].params));
  EXPECT_EQ(server.round, 1);
}

TEST(RunRound, ZeroLearningRateFreezesAtEarliestRound) {
  const auto model = make_preset("unet_concat", 16, 3);
  TrainConfig cfg = small_train(3, 10);
  cfg.learning_rate = 0.0;
  const auto res = run_federation(cfg, small_silos(3), model);
  ASSERT_TRUE(res.freeze_round);
  EXPECT_EQ(*res.freeze_round, 2 + cfg.patience);
  for (const auto& r : res.rounds) {
    EXPECT_EQ(r.drift.value_or(0.0), 0.0);
    EXPECT_EQ(r.rho_percent.value_or(0.0), 0.0);
  }
}

TEST(RunRound, CommunicationAndFreezeProtocol) {
  const auto model = make_preset("unet_concat", 16, 3);
  const Network net(model);
  TrainConfig cfg = small_train(3, 9);
  cfg.learning_rate = 0.0;  // guarantees a freeze at round 5
  const ParamSet initial = build_model(model);
  ServerState server = make_server(initial, cfg);
  auto clients = make_clients(initial, small_silos(3), cfg);
  const std::int64_t all = wire_size(initial, Partition::all), dec = wire_size(initial, Partition::decoder);

  std::vector<ParamSet> globals;
  int froze = 0;
  std::optional<int> freeze_round;
  for (int r = 1; r <= cfg.rounds; ++r) {
    const RoundRecord rec = run_round(net, server, clients, cfg);
    globals.push_back(server.global);
    froze += rec.froze_this_round;
    if (rec.froze_this_round) {
      freeze_round = r;
      for (const auto& c : clients) EXPECT_EQ(c.mask, FreezeMask::encoder_only());
    }
    const bool post = freeze_round && r > *freeze_round;
    for (const auto& c : rec.clients) {
      EXPECT_EQ(c.ledger.bytes_uplink, post ? dec : all) << "round " << r;
      EXPECT_EQ(c.ledger.bytes_downlink, post && r > *freeze_round + 1 ? dec : all) << "round " << r;
      EXPECT_EQ(c.ledger.params_updated, post ? param_count(initial, Partition::decoder) : param_count(initial, Partition::all));
    }
    EXPECT_EQ(rec.frozen, freeze_round.has_value());
  }
  EXPECT_EQ(froze, 1);
  ASSERT_EQ(freeze_round, 5);
  EXPECT_THROW(run_round(net, server, clients, cfg), ContractError);
}

TEST(RunRound, PostFreezeEncoderIsConserved) {
  const auto model = make_preset("unet_concat", 16, 3);
  const Network net(model);
  TrainConfig cfg = small_train(2, 12);
  cfg.tau = 99.0;  // freeze as soon as patience allows
  cfg.patience = 1;
  const ParamSet initial = build_model(model);
  ServerState server = make_server(initial, cfg);
  auto clients = make_clients(initial, small_silos(2), cfg);
  std::vector<ParamSet> globals;
  for (int r = 1; r <= cfg.rounds; ++r) {
    run_round(net, server, clients, cfg);
    globals.push_back(server.global);
  }
  const int fr = *server.controller.state().freeze_round;
  EXPECT_EQ(fr, 3);
  for (std::size_t i = static_cast<std::size_t>(fr); i < globals.size(); ++i) {
    for (const auto& id : initial.encoder_ids()) {
      EXPECT_TRUE(bit_identical(globals[i].at(id).weight, globals[fr - 1].at(id).weight));
      EXPECT_TRUE(bit_identical(globals[i].at(id).bias, globals[fr - 1].at(id).bias));
    }
    for (const auto& id : initial.decoder_ids()) {
      EXPECT_FALSE(bit_identical(globals[i].at(id).weight, globals[i - 1].at(id).weight));
    }
  }
  // client optimizer state persists across rounds
  EXPECT_EQ(clients[0].opt.step, cfg.rounds * 2);
}

TEST(RunFederation, TinyTauNeverFreezes) {
  TrainConfig cfg = small_train(2, 8);
  cfg.tau = 1e-9;
  const auto res = run_federation(cfg, small_silos(2), make_preset("unet_concat", 16, 3));
  EXPECT_FALSE(res.freeze_round);
  for (const auto& r : res.rounds) EXPECT_FALSE(r.frozen);
}

TEST(RunFederation, DeterministicForFixedSeeds) {
  const TrainConfig cfg = small_train(3, 4);
  const auto model = make_preset("light_leaky", 16, 3);
  const auto a = run_federation(cfg, small_silos(3), model);
  const auto b = run_federation(cfg, small_silos(3), model);
  EXPECT_TRUE(bit_identical(a.final_params, b.final_params));
  for (std::size_t r = 0; r < a.rounds.size(); ++r) {
    EXPECT_EQ(a.rounds[r].drift, b.rounds[r].drift);
    for (std::size_t k = 0; k < a.rounds[r].clients.size(); ++k) {
      EXPECT_EQ(a.rounds[r].clients[k].train_loss, b.rounds[r].clients[k].train_loss);
    }
  }
  TrainConfig other = cfg;
  other.seed += 1;
  EXPECT_FALSE(bit_identical(run_federation(other, small_silos(3), model).final_params, a.final_params));
}

TEST(RunFederation, SingleClientMatchesCentralizedEpochs) {
  const auto model = make_preset("unet_concat", 16, 3);
  const Network net(model);
  TrainConfig cfg = small_train(1, 5);
  cfg.prox_mu = 0.0;
  cfg.freezing = FreezingMode::off;
  auto silos = small_silos(1);
  const auto fed = run_federation(cfg, silos, model);

  ParamSet central = build_model(model);
  OptimizerState opt = make_adam(central, cfg.learning_rate);
  for (int r = 1; r <= cfg.rounds; ++r) {
    train_epoch(net, central, opt, silos[0], cfg, FreezeMask::none(), nullptr, epoch_seed(cfg.seed, 0, r, 0));
  }
  EXPECT_TRUE(bit_identical(fed.final_params, central));
}

TEST(RunFederation, OffModeMonitorsWithoutFreezing) {
  TrainConfig cfg = small_train(2, 8);
  cfg.freezing = FreezingMode::off;
  cfg.tau = 99.0;
  const auto res = run_federation(cfg, small_silos(2), make_preset("unet_concat", 16, 3));
  EXPECT_FALSE(res.freeze_round);
  EXPECT_TRUE(res.rounds.back().rho_percent);
  EXPECT_EQ(res.drift_log.size(), 8u);
}

TEST(RunFederation, ValidatesConfig) {
  TrainConfig cfg = small_train(2, 3);
  EXPECT_THROW(run_federation(cfg, small_silos(3), make_preset("unet_concat", 16, 3)), ConfigError);
  cfg.tau = 0.0;
  EXPECT_THROW(run_federation(cfg, small_silos(2), make_preset("unet_concat", 16, 3)), ConfigError);
}
