#include "icu/io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "icu/errors.hpp"

namespace icu {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string at_line(long line, const std::string& msg) { return "line " + std::to_string(line) + ": " + msg; }

double parse_double(const std::string& s, long line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ValidationError(at_line(line, "not a number: '" + s + "'"));
  return v;
}

long parse_long(const std::string& s, long line) {
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ValidationError(at_line(line, "not an integer: '" + s + "'"));
  return v;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace

std::string kernel_to_csv(const TransitionKernel& kernel) {
  const int n = kernel.n();
  std::ostringstream os;
  os << n << '\n';
  for (int j = 0; j < kernel.cols(); ++j) os << (j ? "," : "") << kernel.column_label(j);
  os << '\n';
  for (int i = 0; i < n; ++i) os << (i ? "," : "") << state_label(n, i);
  os << '\n';
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < kernel.cols(); ++j) os << (j ? "," : "") << fmt(kernel(i, j));
    os << '\n';
  }
  return os.str();
}

TransitionKernel kernel_from_csv(std::istream& in) {
  std::string line;
  long no = 0;
  auto next = [&]() {
    while (std::getline(in, line)) {
      ++no;
      if (!blank(line)) return true;
    }
    return false;
  };
  if (!next()) throw ValidationError("kernel CSV: empty input");
  const long n = parse_long(split(line).at(0), no);
  if (n < 1) throw ValidationError(at_line(no, "kernel CSV: n must be positive"));
  if (!next()) throw ValidationError("kernel CSV: missing column labels");
  const auto cols = split(line);
  if (static_cast<long>(cols.size()) != n + 3) throw ValidationError(at_line(no, "expected n+3 column labels"));
  for (long j = 0; j < n + 3; ++j) {
    if (cols[j] != state_label(static_cast<int>(n), static_cast<int>(j))) {
      throw ValidationError(at_line(no, "unexpected column label '" + cols[j] + "'"));
    }
  }
  if (!next()) throw ValidationError("kernel CSV: missing row labels");
  const auto rows = split(line);
  if (static_cast<long>(rows.size()) != n) throw ValidationError(at_line(no, "expected n row labels"));
  Eigen::MatrixXd m(n, n + 3);
  for (long i = 0; i < n; ++i) {
    if (!next()) throw ValidationError("kernel CSV: expected " + std::to_string(n) + " rows of probabilities");
    const auto cells = split(line);
    if (static_cast<long>(cells.size()) != n + 3) throw ValidationError(at_line(no, "expected n+3 values"));
    for (long j = 0; j < n + 3; ++j) m(i, j) = parse_double(cells[j], no);
  }
  if (next()) throw ValidationError(at_line(no, "unexpected trailing row"));
  return TransitionKernel(std::move(m), 1e-9);
}

std::string matrix_to_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& columns) {
  if (static_cast<Eigen::Index>(columns.size()) != m.cols()) throw ValidationError("matrix_to_csv: label count mismatch");
  std::ostringstream os;
  for (std::size_t j = 0; j < columns.size(); ++j) os << (j ? "," : "") << columns[j];
  os << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << fmt(m(i, j));
    os << '\n';
  }
  return os.str();
}

TrajectorySet trajectories_from_csv(std::istream& in, int n) {
  struct Row {
    std::string id;
    long period;
    std::string state;
    long line;
  };
  std::vector<Row> rows;
  std::string line;
  long no = 0;
  bool header = false;
  int max_score = 0;
  while (std::getline(in, line)) {
    ++no;
    if (blank(line)) continue;
    const auto cells = split(line);
    if (!header) {
      if (cells.size() != 3 || cells[0] != "id" || cells[1] != "period" || cells[2] != "state") {
        throw ValidationError(at_line(no, "expected header id,period,state"));
      }
      header = true;
      continue;
    }
    if (cells.size() != 3) throw ValidationError(at_line(no, "expected 3 fields, found " + std::to_string(cells.size())));
    if (cells[0].empty()) throw ValidationError(at_line(no, "empty hospitalization id"));
    Row r{cells[0], parse_long(cells[1], no), cells[2], no};
    if (r.state.size() >= 2 && r.state[0] == 'S') {
      const long k = parse_long(r.state.substr(1), no);
      if (k < 1) throw ValidationError(at_line(no, "unknown state label '" + r.state + "'"));
      max_score = std::max(max_score, static_cast<int>(k));
    } else if (r.state != "CR" && r.state != "RL" && r.state != "D") {
      throw ValidationError(at_line(no, "unknown state label '" + r.state + "'"));
    }
    rows.push_back(std::move(r));
  }
  if (!header) throw ValidationError("trajectory CSV: empty input");
  if (rows.empty()) throw ValidationError("trajectory CSV: no data rows");
  if (n == 0) n = max_score;
  if (n < 1) throw ValidationError("trajectory CSV: no severity scores observed");
  if (max_score > n) throw ValidationError("trajectory CSV: score label above S" + std::to_string(n));

  TrajectorySet out(n);
  std::vector<int> seq;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Row& r = rows[k];
    const bool fresh = k == 0 || rows[k - 1].id != r.id;
    if (fresh) {
      if (!seq.empty()) out.add(seq);
      seq.clear();
      if (r.period != 0) throw ValidationError(at_line(r.line, "hospitalization " + r.id + " must start at period 0"));
    } else if (r.period != rows[k - 1].period + 1) {
      throw ValidationError(at_line(r.line, "periods of hospitalization " + r.id + " are not consecutive"));
    }
    const int s = parse_state_label(n, r.state);
    if (!seq.empty() && seq.back() >= n) {
      throw ValidationError(at_line(r.line, "hospitalization " + r.id + " continues after a terminal state"));
    }
    seq.push_back(s);
  }
  if (!seq.empty()) out.add(seq);
  return out;
}

void trajectories_to_csv(std::ostream& out, const TrajectorySet& data) {
  out << "id,period,state\n";
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto seq = data[k];
    for (std::size_t t = 0; t < seq.size(); ++t) out << k + 1 << ',' << t << ',' << state_label(data.n(), seq[t]) << '\n';
  }
}

void write_event_log(std::ostream& out, const std::vector<SimEvent>& log) {
  for (const SimEvent& e : log) {
    const nlohmann::json j{{"time", e.time}, {"patient", e.patient}, {"kind", event_kind_name(e.kind)}, {"value", e.value}};
    out << j.dump() << '\n';
  }
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    j.push_back(std::move(row));
  }
  return j;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw ValidationError(what + ": expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!j[i].is_array() || static_cast<Eigen::Index>(j[i].size()) != cols) {
      throw ValidationError(what + ": row " + std::to_string(i + 1) + " has the wrong length");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw ValidationError(what + ": non-numeric entry in row " + std::to_string(i + 1));
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw ValidationError(what + ": non-numeric entry");
    v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  }
  return v;
}

nlohmann::json reward_spec_to_json(const RewardSpec& s) {
  return {{"r_W", s.r_W},         {"r_RL", s.r_RL},       {"r_D", s.r_D},       {"r_PT_RL", s.r_PT_RL},
          {"r_PT_D", s.r_PT_D},   {"r_CR_RL", s.r_CR_RL}, {"r_CR_D", s.r_CR_D}, {"d_A", s.d_A},
          {"d_C", s.d_C},         {"lambda", s.lambda}};
}

namespace {

double number_field(const nlohmann::json& j, const char* key, const std::string& what) {
  if (!j.contains(key) || !j[key].is_number()) throw ValidationError(what + ": missing numeric field '" + key + "'");
  return j[key].get<double>();
}

}  // namespace

RewardSpec reward_spec_from_json(const nlohmann::json& j) {
  const std::string what = "reward spec";
  RewardSpec s;
  s.r_W = number_field(j, "r_W", what);
  s.r_RL = number_field(j, "r_RL", what);
  s.r_D = number_field(j, "r_D", what);
  s.r_PT_RL = number_field(j, "r_PT_RL", what);
  s.r_PT_D = number_field(j, "r_PT_D", what);
  s.r_CR_RL = number_field(j, "r_CR_RL", what);
  s.r_CR_D = number_field(j, "r_CR_D", what);
  s.d_A = number_field(j, "d_A", what);
  s.d_C = number_field(j, "d_C", what);
  s.lambda = number_field(j, "lambda", what);
  s.validate();
  return s;
}

nlohmann::json mdp_rewards_to_json(const MdpRewards& r) {
  return {{"r_W", r.r_W}, {"r_CR", r.r_CR}, {"r_RL", r.r_RL}, {"r_D", r.r_D}, {"r_PT", r.r_PT}, {"lambda", r.lambda}};
}

MdpRewards mdp_rewards_from_json(const nlohmann::json& j) {
  const std::string what = "rewards";
  MdpRewards r(number_field(j, "r_W", what), number_field(j, "r_CR", what), number_field(j, "r_RL", what),
               number_field(j, "r_D", what), number_field(j, "r_PT", what), number_field(j, "lambda", what));
  r.validate();
  return r;
}

nlohmann::json factor_model_to_json(const FactorModel& model) {
  const int cols = static_cast<int>(model.w_nominal().rows());
  Eigen::MatrixXd lower(cols, model.rank());
  Eigen::MatrixXd upper(cols, model.rank());
  for (int l = 0; l < model.rank(); ++l) {
    lower.col(l) = model.factor_sets()[l].lower;
    upper.col(l) = model.factor_sets()[l].upper;
  }
  return {{"u", matrix_to_json(model.u())},
          {"w", matrix_to_json(model.w_nominal())},
          {"lower", matrix_to_json(lower)},
          {"upper", matrix_to_json(upper)}};
}

FactorModel factor_model_from_json(const nlohmann::json& j) {
  for (const char* key : {"u", "w", "lower", "upper"}) {
    if (!j.contains(key)) throw ValidationError(std::string("factor model: missing field '") + key + "'");
  }
  const Eigen::MatrixXd u = matrix_from_json(j["u"], "factor model u");
  const Eigen::MatrixXd w = matrix_from_json(j["w"], "factor model w");
  const Eigen::MatrixXd lower = matrix_from_json(j["lower"], "factor model lower");
  const Eigen::MatrixXd upper = matrix_from_json(j["upper"], "factor model upper");
  if (lower.rows() != w.rows() || lower.cols() != w.cols() || upper.rows() != w.rows() || upper.cols() != w.cols()) {
    throw ValidationError("factor model: bounds must have the shape of w");
  }
  std::vector<BoxSimplexSet> sets;
  for (Eigen::Index l = 0; l < w.cols(); ++l) sets.emplace_back(lower.col(l), upper.col(l));
  return FactorModel(u, w, std::move(sets));
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path);
  f << text;
  if (!f) throw ValidationError("write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace icu
