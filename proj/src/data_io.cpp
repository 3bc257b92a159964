#include "ajm/data_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace ajm {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::string content = read_file(path);
  return fnv1a64(content.data(), content.size());
}

std::string digest_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t at = line.find(',', start);
    if (at == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, at - start));
    start = at + 1;
  }
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_double(const std::string& field, const std::string& file, int row, bool allow_inf) {
  const char* begin = field.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + field.size() || field.empty())
    throw ValidationError(file + " row " + std::to_string(row) + ": cannot parse number '" +
                          field + "'");
  if (!allow_inf && !std::isfinite(v))
    throw ValidationError(file + " row " + std::to_string(row) + ": non-finite value '" + field +
                          "'");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // row numbers = index + 2
};

CsvTable read_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  CsvTable table;
  std::string line;
  if (!std::getline(in, line))
    throw ValidationError(path + ": empty file, header row required");
  table.header = split_csv(strip_cr(line));
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> fields = split_csv(line);
    if (fields.size() != table.header.size())
      throw ValidationError(path + " row " + std::to_string(table.rows.size() + 2) + ": has " +
                            std::to_string(fields.size()) + " fields, header has " +
                            std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

void check_prefix(const CsvTable& t, const std::string& path,
                  const std::vector<std::string>& expect) {
  for (std::size_t j = 0; j < expect.size(); ++j) {
    if (t.header.size() <= j || t.header[j] != expect[j])
      throw ValidationError(path + ": header must start with '" + expect[0] + "," + expect[1] +
                            "," + expect[2] + "'");
  }
}

}  // namespace

JointData load_joint_data(const std::string& long_path, const std::string& surv_path) {
  CsvTable surv = read_csv(surv_path);
  check_prefix(surv, surv_path, {"id", "T", "delta"});
  CsvTable lng = read_csv(long_path);
  check_prefix(lng, long_path, {"id", "time", "y"});

  JointData data;
  int n = static_cast<int>(surv.rows.size());
  data.T.resize(n);
  data.event.resize(n);
  std::map<std::string, int> index;
  for (int i = 0; i < n; ++i) {
    int row = i + 2;
    const auto& r = surv.rows[i];
    if (!index.emplace(r[0], i).second)
      throw ValidationError(surv_path + " row " + std::to_string(row) + ": duplicate subject '" +
                            r[0] + "'");
    data.ids.push_back(r[0]);
    data.T(i) = parse_double(r[1], surv_path, row, false);
    double delta = parse_double(r[2], surv_path, row, false);
    if (delta != 0.0 && delta != 1.0)
      throw ValidationError(surv_path + " row " + std::to_string(row) +
                            ": delta must be 0 or 1, got '" + r[2] + "'");
    data.event(i) = static_cast<int>(delta);
  }
  for (std::size_t j = 3; j < surv.header.size(); ++j) {
    Eigen::VectorXd col(n);
    for (int i = 0; i < n; ++i) col(i) = parse_double(surv.rows[i][j], surv_path, i + 2, false);
    if (!data.covariates.emplace(surv.header[j], std::move(col)).second)
      throw ValidationError(surv_path + ": duplicate covariate column '" + surv.header[j] + "'");
  }

  int N = static_cast<int>(lng.rows.size());
  data.t_long.resize(N);
  data.y.resize(N);
  std::vector<std::vector<bool>> seen(lng.header.size() - 3, std::vector<bool>(n, false));
  for (int j = 0; j < N; ++j) {
    int row = j + 2;
    const auto& r = lng.rows[j];
    auto it = index.find(r[0]);
    if (it == index.end())
      throw ValidationError(long_path + " row " + std::to_string(row) + ": subject '" + r[0] +
                            "' missing from the survival file");
    int i = it->second;
    data.subj.push_back(i);
    data.t_long(j) = parse_double(r[1], long_path, row, false);
    data.y(j) = parse_double(r[2], long_path, row, false);
    if (data.t_long(j) > data.T(i))
      throw ValidationError(long_path + " row " + std::to_string(row) + ": time " + r[1] +
                            " is past the follow-up time of subject '" + r[0] + "'");
    for (std::size_t c = 3; c < lng.header.size(); ++c) {
      double v = parse_double(r[c], long_path, row, false);
      const std::string& name = lng.header[c];
      auto cov = data.covariates.find(name);
      if (cov == data.covariates.end())
        cov = data.covariates
                  .emplace(name, Eigen::VectorXd::Constant(
                                     n, std::numeric_limits<double>::quiet_NaN()))
                  .first;
      if (seen[c - 3][i] || std::isfinite(cov->second(i))) {
        if (cov->second(i) != v)
          throw ValidationError(long_path + " row " + std::to_string(row) + ": covariate '" +
                                name + "' is not constant within subject '" + r[0] + "'");
      } else {
        cov->second(i) = v;
      }
      seen[c - 3][i] = true;
    }
  }
  for (std::size_t c = 3; c < lng.header.size(); ++c) {
    const Eigen::VectorXd& col = data.covariates.at(lng.header[c]);
    for (int i = 0; i < n; ++i)
      if (!std::isfinite(col(i)))
        throw ValidationError(long_path + ": covariate '" + lng.header[c] +
                              "' has no value for subject '" + data.ids[i] + "'");
  }

  data.finalize();
  return data;
}

void write_joint_data(const JointData& data, const std::string& long_path,
                      const std::string& surv_path) {
  std::ostringstream surv;
  surv << "id,T,delta";
  for (const auto& [name, col] : data.covariates) surv << "," << name;
  surv << "\n";
  for (int i = 0; i < data.n(); ++i) {
    surv << data.ids[i] << "," << fmt_double(data.T(i)) << "," << data.event(i);
    for (const auto& [name, col] : data.covariates) surv << "," << fmt_double(col(i));
    surv << "\n";
  }
  write_file(surv_path, surv.str());

  std::ostringstream lng;
  lng << "id,time,y\n";
  for (int j = 0; j < data.N(); ++j)
    lng << data.ids[data.subj[j]] << "," << fmt_double(data.t_long(j)) << ","
        << fmt_double(data.y(j)) << "\n";
  write_file(long_path, lng.str());
}

void save_truth(const SimTruth& truth, const std::string& path) {
  if (!SimSetting::is_preset(truth.setting.name))
    throw std::invalid_argument("save_truth: only preset settings can be serialized");
  std::ostringstream out;
  out << "kind,subject,key,value\n";
  out << "setting,0,name," << truth.setting.name << "\n";
  out << "setting,0,seed," << truth.setting.seed << "\n";
  int n = truth.setting.n;
  for (int i = 0; i < n; ++i) {
    out << "subject," << i << ",x1," << fmt_double(truth.x1(i)) << "\n";
    out << "subject," << i << ",x2," << fmt_double(truth.x2(i)) << "\n";
    out << "subject," << i << ",r," << fmt_double(truth.r(i)) << "\n";
    out << "subject," << i << ",event," << fmt_double(truth.event_time(i)) << "\n";
    out << "subject," << i << ",censor," << fmt_double(truth.censor_time(i)) << "\n";
    for (Eigen::Index c = 0; c < truth.fri_coef.cols(); ++c)
      out << "coef," << i << ",c" << c << "," << fmt_double(truth.fri_coef(i, c)) << "\n";
  }
  write_file(path, out.str());
}

SimTruth load_truth(const std::string& path) {
  CsvTable table = read_csv(path);
  if (table.header != std::vector<std::string>{"kind", "subject", "key", "value"})
    throw ValidationError(path + ": header must be 'kind,subject,key,value'");

  std::string name;
  std::uint64_t seed = 0;
  bool have_name = false, have_seed = false;
  for (const auto& r : table.rows) {
    if (r[0] != "setting") continue;
    if (r[2] == "name") {
      name = r[3];
      have_name = true;
    } else if (r[2] == "seed") {
      seed = std::strtoull(r[3].c_str(), nullptr, 10);
      have_seed = true;
    }
  }
  if (!have_name || !have_seed)
    throw ValidationError(path + ": missing setting name or seed rows");

  // preset + seed pins the structure; stored values overwrite the redraw
  SimTruth truth = draw_trajectories(SimSetting::preset(name, seed));
  int n = truth.setting.n;
  for (std::size_t j = 0; j < table.rows.size(); ++j) {
    const auto& r = table.rows[j];
    int row = static_cast<int>(j) + 2;
    if (r[0] == "setting") continue;
    int i = static_cast<int>(parse_double(r[1], path, row, false));
    if (i < 0 || i >= n)
      throw ValidationError(path + " row " + std::to_string(row) + ": subject index " + r[1] +
                            " out of range");
    double v = parse_double(r[3], path, row, true);
    if (r[0] == "subject") {
      if (r[2] == "x1")
        truth.x1(i) = v;
      else if (r[2] == "x2")
        truth.x2(i) = v;
      else if (r[2] == "r")
        truth.r(i) = v;
      else if (r[2] == "event")
        truth.event_time(i) = v;
      else if (r[2] == "censor")
        truth.censor_time(i) = v;
      else
        throw ValidationError(path + " row " + std::to_string(row) + ": unknown key '" + r[2] +
                              "'");
    } else if (r[0] == "coef") {
      if (r[2].empty() || r[2][0] != 'c')
        throw ValidationError(path + " row " + std::to_string(row) + ": unknown key '" + r[2] +
                              "'");
      int c = std::atoi(r[2].c_str() + 1);
      if (c < 0 || c >= truth.fri_coef.cols())
        throw ValidationError(path + " row " + std::to_string(row) +
                              ": coefficient index out of range");
      truth.fri_coef(i, c) = v;
    } else {
      throw ValidationError(path + " row " + std::to_string(row) + ": unknown kind '" + r[0] +
                            "'");
    }
  }
  return truth;
}

}  // namespace ajm
