#pragma once

// CSV artifacts. Column orders are fixed and documented in
// docs/csv_schemas.md; floats use %.10g so identical runs serialize to
// identical bytes.

#include <fstream>
#include <string>

#include "dce/channels.hpp"
#include "dce/surgeon.hpp"
#include "dce/trainer.hpp"

namespace dce {

inline std::string fmt_g(double v) { return strf("%.10g", v); }

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot create output file: " + path);
  return out;
}

inline void write_step_csv(const std::string& path, const RunRecord& rec) {
  std::ofstream out = open_out(path);
  out << "stage,epoch,t,loss,lr,active,repairs\n";
  for (const StepRow& r : rec.steps)
    out << r.stage << "," << r.epoch << "," << r.t << "," << fmt_g(r.loss) << "," << fmt_g(r.lr) << ","
        << r.active << "," << r.repairs << "\n";
}

inline void write_epoch_csv(const std::string& path, const RunRecord& rec) {
  std::ofstream out = open_out(path);
  out << "stage,epoch,train_acc,test_acc\n";
  for (const EpochRow& r : rec.epochs)
    out << r.stage << "," << r.epoch << "," << fmt_g(r.train_acc) << "," << fmt_g(r.test_acc) << "\n";
}

inline void write_selection_csv(const std::string& path, const ChannelRegistry& reg,
                                const RunRecord& rec) {
  std::ofstream out = open_out(path);
  const std::vector<uint32_t> rle =
      rle_encode([&] {
        std::vector<uint8_t> bits(rec.selection.selected.begin(), rec.selection.selected.end());
        return bits;
      }());
  out << "# final mask rle " << rle_to_string(rle) << "\n";
  out << "layer,channel,T,mu_hat,mu_bar_final,selected_final\n";
  for (int f = 0; f < reg.size(); ++f) {
    const ChannelId id = reg.id(f);
    out << id.layer << "," << id.index << "," << rec.selection.pulls[size_t(f)] << ","
        << fmt_g(rec.selection.mu_hat[size_t(f)]) << "," << fmt_g(rec.selection.mu_bar[size_t(f)])
        << "," << int(rec.selection.selected[size_t(f)]) << "\n";
  }
}

inline void write_cost_csv(const std::string& path, const CostReport& report) {
  std::ofstream out = open_out(path);
  out << "layer,type,params,macs\n";
  for (const LayerCost& r : report.rows)
    out << r.name << "," << r.type << "," << r.params << "," << r.macs << "\n";
  out << "total,," << report.total_params << "," << report.total_macs << "\n";
}

inline void write_saliency_csv(const std::string& path, const ChannelRegistry& reg,
                               const std::vector<SaliencyReport>& reports,
                               const std::vector<std::vector<double>>& raw_per_report) {
  check(reports.size() == raw_per_report.size(), "write_saliency_csv: raw/report count mismatch");
  std::ofstream out = open_out(path);
  out << "t,layer,channel,raw,normalized\n";
  for (size_t r = 0; r < reports.size(); ++r) {
    const SaliencyReport& rep = reports[r];
    check(rep.channels.size() == raw_per_report[r].size(), "write_saliency_csv: raw size mismatch");
    for (size_t i = 0; i < rep.channels.size(); ++i) {
      const ChannelId id = reg.id(rep.channels[i]);
      out << rep.step << "," << id.layer << "," << id.index << "," << fmt_g(raw_per_report[r][i])
          << "," << fmt_g(rep.values[i]) << "\n";
    }
  }
}

inline std::string cost_table(const CostReport& report) {
  std::string s = strf("%-12s %-14s %14s %16s\n", "layer", "type", "params", "macs");
  for (const LayerCost& r : report.rows)
    s += strf("%-12s %-14s %14lld %16lld\n", r.name.c_str(), r.type.c_str(),
              static_cast<long long>(r.params), static_cast<long long>(r.macs));
  s += strf("%-12s %-14s %14lld %16lld\n", "total", "",
            static_cast<long long>(report.total_params), static_cast<long long>(report.total_macs));
  return s;
}

inline std::string run_summary(const RunRecord& rec) {
  const double pr = rec.baseline_cost.total_params
                        ? double(rec.final_cost.total_params) / double(rec.baseline_cost.total_params)
                        : 0.0;
  const double mr = rec.baseline_cost.total_macs
                        ? double(rec.final_cost.total_macs) / double(rec.baseline_cost.total_macs)
                        : 0.0;
  return strf(
      "final_test_acc=%.4f params=%lld (%.1f%% of baseline) macs=%lld (%.1f%% of baseline) "
      "repairs=%d wall=%.1fs\n",
      rec.final_test_acc, static_cast<long long>(rec.final_cost.total_params), 100.0 * pr,
      static_cast<long long>(rec.final_cost.total_macs), 100.0 * mr, rec.total_repairs,
      rec.wall_seconds);
}

}  // namespace dce
