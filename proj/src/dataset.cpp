#include "phylonbe/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace phylonbe {

namespace {

void append_float(std::string& out, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  out += buf;
}

void append_piecewise(std::string& out, const PiecewiseConstant& f) {
  out += "{\"times\":[";
  for (std::size_t i = 0; i < f.change_times.size(); ++i) {
    if (i) out += ',';
    append_float(out, f.change_times[i]);
  }
  out += "],\"values\":[";
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    if (i) out += ',';
    append_float(out, f.values[i]);
  }
  out += "]}";
}

PiecewiseConstant piecewise_from_json(const nlohmann::json& j) {
  PiecewiseConstant f;
  f.change_times = j.at("times").get<std::vector<double>>();
  f.values = j.at("values").get<std::vector<double>>();
  f.validate();
  return f;
}

}  // namespace

std::string record_to_json_line(const SimRecord& record) {
  std::string out;
  out.reserve(4096);
  out += "{\"seed\":" + std::to_string(record.seed);
  out += ",\"sigma\":";
  append_float(out, record.sigma);
  out += ",\"t_present\":";
  append_float(out, record.t_present);
  out += ",\"t_stop\":" + std::to_string(record.truth.t_stop);
  out += ",\"newick\":\"" + serialize_newick(record.tree) + "\"";
  out += ",\"measurements\":[";
  for (std::size_t i = 0; i < record.measurements.size(); ++i) {
    const auto& m = record.measurements[i];
    if (i) out += ',';
    out += "{\"t\":";
    append_float(out, m.t);
    out += ",\"n_prev\":" + std::to_string(m.n_prev);
    out += ",\"n_cum\":" + std::to_string(m.n_cum);
    out += ",\"reff\":";
    append_float(out, m.reff_at);
    out += '}';
  }
  out += "],\"truth\":{\"reff\":";
  append_piecewise(out, record.truth.reff);
  out += ",\"p_psi\":";
  append_piecewise(out, record.truth.p_psi);
  out += "}}";
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<SimRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (const auto& record : records) {
    out << record_to_json_line(record) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<SimRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset: " + path.string());
  std::vector<SimRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    SimRecord record;
    record.seed = j.at("seed").get<std::uint64_t>();
    record.sigma = j.at("sigma").get<double>();
    record.t_present = j.at("t_present").get<double>();
    record.tree = parse_newick(j.at("newick").get<std::string>());
    for (const auto& jm : j.at("measurements")) {
      Measurement m;
      m.t = jm.at("t").get<double>();
      m.n_prev = jm.at("n_prev").get<long>();
      m.n_cum = jm.at("n_cum").get<long>();
      m.reff_at = jm.at("reff").get<double>();
      record.measurements.push_back(m);
    }
    const auto& truth = j.at("truth");
    record.truth.reff = piecewise_from_json(truth.at("reff"));
    record.truth.p_psi = piecewise_from_json(truth.at("p_psi"));
    record.truth.sigma = record.sigma;
    record.truth.t_stop = j.at("t_stop").get<int>();
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace phylonbe
