#include "fedfreeze/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fedfreeze {

using nlohmann::json;

namespace {

json silo_json(const SiloConfig& s) {
  return {{"silo_id", s.silo_id},
          {"n_subjects", s.n_subjects},
          {"native_size", {s.height, s.width}},
          {"intensity_gain", s.intensity_gain},
          {"bias_field_strength", s.bias_field_strength},
          {"noise_sigma", s.noise_sigma},
          {"seed", s.seed}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json psnr_json(double psnr) { return is_psnr_identical(psnr) ? json("inf") : json(psnr); }

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

json ledger_json(const LedgerEntry& e) {
  return {{"flops_forward", e.flops_forward},   {"flops_backward", e.flops_backward},
          {"params_updated", e.params_updated}, {"bytes_uplink", e.bytes_uplink},
          {"bytes_downlink", e.bytes_downlink}, {"energy_kwh", e.energy_kwh},
          {"co2eq_kg", e.co2eq_kg}};
}

const json& require(const json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) throw std::runtime_error(what + ": missing '" + key + "'");
  return j.at(key);
}

double mean_of(const std::vector<double>& v) { return v.empty() ? 0.0 : sample_mean(v); }
double std_of(const std::vector<double>& v) { return sample_std(v); }

}  // namespace

json config_to_json(const ExperimentConfig& cfg) {
  const auto& t = cfg.train;
  json silos = json::array();
  for (const auto& s : cfg.silos) silos.push_back(silo_json(s));
  return {
      {"train",
       {{"rounds", t.rounds},
        {"local_epochs", t.local_epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"prox_mu", t.prox_mu},
        {"seed", t.seed},
        {"num_clients", t.num_clients}}},
      {"model", cfg.model},
      {"image_size", cfg.image_size},
      {"freezing", {{"mode", to_string(t.freezing)}, {"tau", t.tau}, {"patience", t.patience}}},
      {"augment",
       {{"max_rotation_deg", t.augment.max_rotation_deg},
        {"max_translation_px", t.augment.max_translation_px},
        {"allow_flip", t.augment.allow_flip}}},
      {"energy", {{"kwh_per_flop", t.energy.kwh_per_flop}, {"carbon_intensity", t.energy.carbon_intensity}}},
      {"silos", silos},
      {"eval_silo", silo_json(cfg.eval_silo)},
      {"repetitions", cfg.repetitions},
      {"output_dir", cfg.output_dir},
  };
}

json report_to_json(const RunReport& r) {
  json rounds = json::array();
  json client_wall = json::array();
  for (const auto& rec : r.rounds) {
    json clients = json::array();
    json walls = json::array();
    for (const auto& c : rec.clients) {
      clients.push_back({{"client_id", c.client_id}, {"train_loss", c.train_loss}, {"ledger", ledger_json(c.ledger)}});
      walls.push_back(c.ledger.wall_ms);
    }
    rounds.push_back({{"round", rec.round},
                      {"drift", optional_json(rec.drift)},
                      {"rho_percent", optional_json(rec.rho_percent)},
                      {"consecutive_hits", rec.consecutive_hits},
                      {"frozen", rec.frozen},
                      {"froze_this_round", rec.froze_this_round},
                      {"clients", clients}});
    client_wall.push_back(walls);
  }
  json eval = json::array();
  for (const auto& e : r.eval) {
    eval.push_back({{"centre", r.config.eval_silo.silo_id},
                    {"subject_id", e.subject_id},
                    {"mae", e.metrics.mae},
                    {"psnr", psnr_json(e.metrics.psnr)},
                    {"ssim", e.metrics.ssim}});
  }
  const bool frozen_at_end = r.freeze_round.has_value();
  const auto& t = r.totals;
  return {
      {"schema_version", kReportSchemaVersion},
      {"run_id", r.run_id},
      {"repetition", r.repetition},
      {"seed", r.seed},
      {"model_preset", r.config.model},
      {"config", config_to_json(r.config)},
      {"params",
       {{"encoder", r.params_encoder},
        {"decoder", r.params_decoder},
        {"total", r.params_encoder + r.params_decoder},
        {"trainable_final", frozen_at_end ? r.params_decoder : r.params_encoder + r.params_decoder}}},
      {"freeze_round", r.freeze_round ? json(*r.freeze_round) : json(nullptr)},
      {"rounds", rounds},
      {"eval", eval},
      {"totals",
       {{"flops_forward", t.flops_forward},
        {"flops_backward", t.flops_backward},
        {"flops_total", t.flops_forward + t.flops_backward},
        {"params_updated", t.params_updated},
        {"bytes_uplink", t.bytes_uplink},
        {"bytes_downlink", t.bytes_downlink},
        {"energy_kwh", t.energy_kwh},
        {"co2eq_kg", t.co2eq_kg}}},
      {"timing", {{"wall_ms_total", r.wall_ms_total}, {"client_wall_ms", client_wall}}},
  };
}

json canonical_payload(const json& report) {
  json out = report;
  if (out.is_object()) out.erase("timing");
  return out;
}

std::string metrics_csv(const RunReport& r) {
  std::ostringstream os;
  os << "run_id,seed,centre,subject_id,mae,psnr,ssim\n";
  for (const auto& e : r.eval) {
    os << r.run_id << ',' << r.seed << ',' << r.config.eval_silo.silo_id << ',' << e.subject_id << ','
       << format_double(e.metrics.mae) << ','
       << (is_psnr_identical(e.metrics.psnr) ? std::string("inf") : format_double(e.metrics.psnr)) << ','
       << format_double(e.metrics.ssim) << '\n';
  }
  return os.str();
}

json load_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read report " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("report " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
    if (!os.flush()) throw std::runtime_error("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

double percent_reduction(double off, double on) { return off == 0.0 ? 0.0 : (off - on) / off * 100.0; }

namespace {

ArmSummary summarize(const std::vector<json>& reports, std::string& preset, const char* arm) {
  if (reports.empty()) throw std::runtime_error(std::string(arm) + " arm: at least one report is required");
  ArmSummary s;
  for (const auto& r : reports) {
    const std::string what = std::string(arm) + " report";
    const std::string p = require(r, "model_preset", what).get<std::string>();
    if (preset.empty()) preset = p;
    else if (p != preset) throw std::runtime_error("model presets differ: '" + preset + "' vs '" + p + "'");
    const auto& totals = require(r, "totals", what);
    const auto& timing = require(r, "timing", what);
    s.time_s.push_back(require(timing, "wall_ms_total", what).get<double>() / 1000.0);
    s.flops.push_back(static_cast<double>(require(totals, "flops_forward", what).get<std::int64_t>() +
                                          require(totals, "flops_backward", what).get<std::int64_t>()));
    s.energy_kwh.push_back(require(totals, "energy_kwh", what).get<double>());
    s.co2eq_kg.push_back(require(totals, "co2eq_kg", what).get<double>());
    s.trainable_params.push_back(
        static_cast<double>(require(require(r, "params", what), "trainable_final", what).get<std::int64_t>()));
    for (const auto& e : require(r, "eval", what)) s.mae.push_back(require(e, "mae", what).get<double>());
    ++s.reports;
  }
  return s;
}

}  // namespace

Comparison compare(const std::vector<json>& off_reports, const std::vector<json>& on_reports) {
  Comparison c;
  c.off = summarize(off_reports, c.model_preset, "off");
  c.on = summarize(on_reports, c.model_preset, "on");
  if (c.off.mae.empty() || c.on.mae.empty()) throw std::runtime_error("reports carry no evaluation cases");
  c.ttest = welch_ttest(c.off.mae, c.on.mae);
  c.stars = significance_stars(c.ttest.p_value);

  struct Row {
    const char* name;
    const std::vector<double>* off;
    const std::vector<double>* on;
  };
  const Row rows[] = {
      {"time_s", &c.off.time_s, &c.on.time_s},
      {"flops", &c.off.flops, &c.on.flops},
      {"energy_kwh", &c.off.energy_kwh, &c.on.energy_kwh},
      {"co2eq_kg", &c.off.co2eq_kg, &c.on.co2eq_kg},
      {"trainable_params", &c.off.trainable_params, &c.on.trainable_params},
  };

  std::ostringstream text;
  text << "model preset: " << c.model_preset << " (" << c.off.reports << " off, " << c.on.reports
       << " on)\n";
  text << std::left << std::setw(18) << "metric" << std::setw(28) << "no freeze" << std::setw(28)
       << "adaptive freeze" << "reduction\n";
  c.json = {{"model_preset", c.model_preset},
            {"reports", {{"off", c.off.reports}, {"on", c.on.reports}}},
            {"metrics", json::object()}};
  for (const auto& row : rows) {
    const double m_off = mean_of(*row.off), m_on = mean_of(*row.on);
    const double red = percent_reduction(m_off, m_on);
    c.json["metrics"][row.name] = {{"off", {{"mean", m_off}, {"std", std_of(*row.off)}}},
                                   {"on", {{"mean", m_on}, {"std", std_of(*row.on)}}},
                                   {"reduction_percent", red}};
    std::ostringstream a, b;
    a << std::setprecision(6) << m_off << " +/- " << std_of(*row.off);
    b << std::setprecision(6) << m_on << " +/- " << std_of(*row.on);
    text << std::left << std::setw(18) << row.name << std::setw(28) << a.str() << std::setw(28) << b.str()
         << std::fixed << std::setprecision(1) << red << "%\n"
         << std::defaultfloat;
  }
  const double med_off = median(c.off.mae), med_on = median(c.on.mae);
  c.json["mae"] = {{"off", {{"mean", mean_of(c.off.mae)}, {"std", std_of(c.off.mae)}, {"median", med_off}, {"n", c.off.mae.size()}}},
                   {"on", {{"mean", mean_of(c.on.mae)}, {"std", std_of(c.on.mae)}, {"median", med_on}, {"n", c.on.mae.size()}}},
                   {"welch_t", c.ttest.t_statistic},
                   {"df", c.ttest.degrees_of_freedom},
                   {"p_value", c.ttest.p_value},
                   {"significance", c.stars}};
  text << std::setprecision(6) << "MAE median: off " << med_off << ", on " << med_on << "\n";
  text << "Welch t = " << c.ttest.t_statistic << ", df = " << c.ttest.degrees_of_freedom
       << ", p = " << c.ttest.p_value << " (" << c.stars << ")\n";
  c.text = text.str();
  return c;
}

std::vector<DriftRow> drift_trace(const json& report) {
  if (!report.is_object() || !report.contains("rounds") || !report["rounds"].is_array() ||
      report["rounds"].empty()) {
    throw std::runtime_error("report has no drift log");
  }
  std::vector<DriftRow> rows;
  for (const auto& r : report["rounds"]) {
    DriftRow row;
    row.round = r.at("round").get<int>();
    if (!r.at("drift").is_null()) row.drift = r["drift"].get<double>();
    if (!r.at("rho_percent").is_null()) row.rho_percent = r["rho_percent"].get<double>();
    row.consecutive_hits = r.at("consecutive_hits").get<int>();
    row.frozen = r.at("frozen").get<bool>();
    row.froze_this_round = r.at("froze_this_round").get<bool>();
    rows.push_back(row);
  }
  return rows;
}

std::string format_drift_trace(const std::vector<DriftRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(7) << "round" << std::setw(16) << "drift" << std::setw(12) << "rho%"
     << std::setw(6) << "hits" << "frozen\n";
  for (const auto& r : rows) {
    std::ostringstream d, p;
    if (r.drift) d << std::setprecision(6) << *r.drift;
    else d << "-";
    if (r.rho_percent) p << std::fixed << std::setprecision(3) << *r.rho_percent;
    else p << "-";
    os << std::left << std::setw(7) << r.round << std::setw(16) << d.str() << std::setw(12) << p.str()
       << std::setw(6) << r.consecutive_hits << (r.frozen ? "yes" : "no")
       << (r.froze_this_round ? "  <- freeze" : "") << '\n';
  }
  return os.str();
}

std::string drift_trace_csv(const std::vector<DriftRow>& rows) {
  std::ostringstream os;
  os << "round,drift,rho_percent,consecutive_hits,frozen,froze_this_round\n";
  for (const auto& r : rows) {
    os << r.round << ',' << (r.drift ? format_double(*r.drift) : "") << ','
       << (r.rho_percent ? format_double(*r.rho_percent) : "") << ',' << r.consecutive_hits << ','
       << (r.frozen ? "true" : "false") << ',' << (r.froze_this_round ? "true" : "false") << '\n';
  }
  return os.str();
}

}  // namespace fedfreeze
