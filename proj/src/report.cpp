#include "bkrylov/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bkrylov/common.hpp"

namespace bkrylov {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void SolverReport::finish() {
  if (records.empty()) return;
  iterations = records.back().iter;
  reortho_count = 0;
  for (const auto& r : records) reortho_count += r.reortho ? 1 : 0;
  const double r0 = records.front().frob;
  const double rk = records.back().frob;
  rate = (iterations > 0 && r0 > 0.0) ? std::pow(rk / r0, 1.0 / iterations) : 0.0;
}

void SolverReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write report: " + path);
  const int s = records.empty() ? 0 : static_cast<int>(records.front().col_norms.size());
  out << "# bkrylov iteration log v1: iter,frob,maxcol,reortho,virt_us,"
         "reductions_started,reductions_waited,overlapped_reductions,normalizes,"
         "tree_reduce_sweeps,tree_backprop_sweeps,broadcast_sweeps,messages,"
         "flops,values_loaded,values_stored,vector_updates";
  for (int j = 0; j < s; ++j) out << ",col" << j;
  out << "\n";
  for (const auto& r : records) {
    out << r.iter << "," << fmt(r.frob) << "," << fmt(r.maxcol) << "," << (r.reortho ? 1 : 0)
        << "," << fmt(r.virt_us) << "," << r.comms.reductions_started << ","
        << r.comms.reductions_waited << "," << r.comms.overlapped_reductions << ","
        << r.comms.normalizes << "," << r.comms.tree_reduce_sweeps << ","
        << r.comms.tree_backprop_sweeps << "," << r.comms.broadcast_sweeps << ","
        << r.comms.messages << "," << r.kernels.flops << "," << r.kernels.values_loaded << ","
        << r.kernels.values_stored << "," << r.kernels.vector_updates;
    for (double c : r.col_norms) out << "," << fmt(c);
    out << "\n";
  }
}

std::string SolverReport::json_summary() const {
  nlohmann::json j;
  j["solver"] = solver;
  j["variant"] = variant;
  j["algebra"] = algebra;
  j["iterations"] = iterations;
  j["converged"] = converged;
  j["reorthonormalizations"] = reortho_count;
  j["restarts"] = restarts;
  j["rate"] = rate;
  j["virtual_time_us"] = virt_time_us;
  j["block_vectors_allocated"] = block_vectors_allocated;
  j["initial_frobenius"] = records.empty() ? 0.0 : records.front().frob;
  j["final_frobenius"] = records.empty() ? 0.0 : records.back().frob;
  j["comms"] = {{"reductions_started", comms_total.reductions_started},
                {"reductions_waited", comms_total.reductions_waited},
                {"overlapped_reductions", comms_total.overlapped_reductions},
                {"normalizes", comms_total.normalizes},
                {"tree_reduce_sweeps", comms_total.tree_reduce_sweeps},
                {"tree_backprop_sweeps", comms_total.tree_backprop_sweeps},
                {"broadcast_sweeps", comms_total.broadcast_sweeps},
                {"messages", comms_total.messages},
                {"barriers", comms_total.barriers}};
  j["kernels"] = {{"flops", kernels_total.flops},
                  {"values_loaded", kernels_total.values_loaded},
                  {"values_stored", kernels_total.values_stored},
                  {"bops", kernels_total.bops},
                  {"bdots", kernels_total.bdots},
                  {"baxpys", kernels_total.baxpys},
                  {"vector_updates", kernels_total.vector_updates}};
  return j.dump(2);
}

void SolverReport::write_json(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write report: " + path);
  out << json_summary() << "\n";
}

}  // namespace bkrylov
