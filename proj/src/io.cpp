#include "imave/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "imave/error.hpp"

namespace imave {

// ---- text files ----

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorCode::IoError, "write failed for " + path);
}

// ---- numbers ----

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& context) {
  const char* b = s.data();
  const char* e = b + s.size();
  double v = 0.0;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    fail(ErrorCode::ParseError, "bad number '" + s + "' in " + context);
  return v;
}

// ---- CSV ----

std::optional<std::size_t> CsvTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  return std::nullopt;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorCode::ParseError, "empty CSV: " + path);
  t.columns = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split_csv_line(line);
    if (row.size() != t.columns.size())
      fail(ErrorCode::ParseError,
           "ragged CSV row in " + path + " (expected " +
               std::to_string(t.columns.size()) + " cells, got " +
               std::to_string(row.size()) + ")");
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ostringstream ss;
  for (std::size_t c = 0; c < table.columns.size(); ++c)
    ss << (c ? "," : "") << table.columns[c];
  ss << "\n";
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size())
      fail(ErrorCode::InvalidArgument, "ragged CSV row on write");
    for (std::size_t c = 0; c < row.size(); ++c)
      ss << (c ? "," : "") << row[c];
    ss << "\n";
  }
  write_text_file(path, ss.str());
}

Dataset read_dataset_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto ycol = t.find("y");
  const auto tcol = t.find("t");
  if (!ycol || !tcol)
    fail(ErrorCode::ParseError, path + " must have 'y' and 't' columns");
  const auto picol = t.find("pi");

  std::vector<std::size_t> xcols;
  for (int j = 1;; ++j) {
    const auto c = t.find("x" + std::to_string(j));
    if (!c) break;
    xcols.push_back(*c);
  }
  if (xcols.empty())
    fail(ErrorCode::ParseError, path + " must have x1..xp columns");
  const std::size_t n = t.rows.size();
  if (n < 2) fail(ErrorCode::ParseError, path + " needs at least two rows");

  Eigen::MatrixXd X(n, xcols.size());
  Eigen::VectorXd Y(n);
  Eigen::VectorXd pi(picol ? n : 0);
  std::vector<std::string> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < xcols.size(); ++j)
      X(i, j) = parse_double(t.rows[i][xcols[j]], path);
    Y(i) = parse_double(t.rows[i][*ycol], path);
    labels[i] = t.rows[i][*tcol];
    if (picol) pi(i) = parse_double(t.rows[i][*picol], path);
  }
  return Dataset(std::move(X), std::move(Y), std::move(labels),
                 std::move(pi));
}

void write_dataset_csv(const std::string& path, const Dataset& ds,
                       bool include_pi) {
  CsvTable t;
  for (int j = 1; j <= ds.p(); ++j)
    t.columns.push_back("x" + std::to_string(j));
  t.columns.push_back("y");
  t.columns.push_back("t");
  if (include_pi) t.columns.push_back("pi");
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    std::vector<std::string> row;
    row.reserve(t.columns.size());
    for (int j = 0; j < ds.p(); ++j)
      row.push_back(format_double(ds.X()(i, j)));
    row.push_back(format_double(ds.Y()(i)));
    row.push_back(ds.label_of_code(ds.T()(i)));
    if (include_pi) row.push_back(format_double(ds.pi()(i)));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

// ---- canonical JSON ----

namespace {

// Minimal writer with deterministic key order and %.17g numbers. Arrays and
// objects are emitted in the order the caller provides.
class JsonWriter {
 public:
  std::string str() const { return ss_.str(); }

  void begin_object() { sep(); ss_ << '{'; fresh_ = true; }
  void end_object() { ss_ << '}'; fresh_ = false; }
  void begin_array() { sep(); ss_ << '['; fresh_ = true; }
  void end_array() { ss_ << ']'; fresh_ = false; }

  void key(const std::string& k) {
    sep();
    ss_ << '"' << k << "\":";
    fresh_ = true;
  }
  // Non-finite values (unusable CV candidates score +infinity) have no JSON
  // literal; they are written as null and read back as +infinity.
  void value(double v) {
    if (!std::isfinite(v)) {
      null();
      return;
    }
    sep();
    ss_ << format_double(v);
    fresh_ = false;
  }
  void value(int v) { sep(); ss_ << v; fresh_ = false; }
  void value(std::int64_t v) { sep(); ss_ << v; fresh_ = false; }
  void value(std::uint64_t v) { sep(); ss_ << v; fresh_ = false; }
  void value(bool v) { sep(); ss_ << (v ? "true" : "false"); fresh_ = false; }
  void value(const std::string& v) {
    sep();
    ss_ << '"';
    for (char c : v) {
      if (c == '"' || c == '\\') ss_ << '\\';
      ss_ << c;
    }
    ss_ << '"';
    fresh_ = false;
  }
  void null() { sep(); ss_ << "null"; fresh_ = false; }

  void vector(const std::vector<double>& v) {
    begin_array();
    for (double x : v) value(x);
    end_array();
  }

 private:
  void sep() {
    if (!fresh_) ss_ << ',';
    fresh_ = true;
  }
  std::ostringstream ss_;
  bool fresh_ = true;
};

}  // namespace

std::string fit_result_to_json(const FitResult& fit) {
  JsonWriter w;
  w.begin_object();
  w.key("schema_version");
  w.value(1);
  w.key("B");
  {
    w.begin_object();
    w.key("rows");
    w.value(fit.B.p());
    w.key("cols");
    w.value(fit.B.d());
    w.key("data");  // row-major
    w.begin_array();
    for (int r = 0; r < fit.B.p(); ++r)
      for (int c = 0; c < fit.B.d(); ++c) w.value(fit.B.B(r, c));
    w.end_array();
    w.end_object();
  }
  w.key("d");
  w.value(fit.d);
  w.key("eta_mode");
  w.value(fit.eta_mode_label.empty() ? eta_mode_name(fit.eta.kind)
                                     : fit.eta_mode_label);
  w.key("iterations");
  w.value(fit.iterations);
  w.key("converged");
  w.value(fit.converged);
  w.key("loss_trace");
  w.vector(fit.loss_trace);
  w.key("h_trace");
  w.vector(fit.h_trace);
  w.key("seed");
  w.value(fit.seed);
  w.end_object();
  return w.str();
}

FitResult fit_result_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("bad fit JSON: ") + e.what());
  }
  try {
    FitResult fit;
    const auto& jb = j.at("B");
    const int rows = jb.at("rows").get<int>();
    const int cols = jb.at("cols").get<int>();
    const auto data = jb.at("data").get<std::vector<double>>();
    if (static_cast<int>(data.size()) != rows * cols)
      fail(ErrorCode::ParseError, "fit JSON: B size mismatch");
    fit.B.B.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) fit.B.B(r, c) = data[r * cols + c];
    fit.d = j.at("d").get<int>();
    fit.eta_mode_label = j.at("eta_mode").get<std::string>();
    if (fit.eta_mode_label == "zero") fit.eta.kind = EtaMode::Kind::Zero;
    else if (fit.eta_mode_label == "song_pi")
      fit.eta.kind = EtaMode::Kind::SongPi;
    else if (fit.eta_mode_label == "fixed")
      fit.eta.kind = EtaMode::Kind::Fixed;
    else if (fit.eta_mode_label == "estimated_star")
      fit.eta.kind = EtaMode::Kind::EstimatedStar;
    else
      fail(ErrorCode::ParseError, "fit JSON: unknown eta mode");
    fit.iterations = j.at("iterations").get<int>();
    fit.converged = j.at("converged").get<bool>();
    fit.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    fit.h_trace = j.at("h_trace").get<std::vector<double>>();
    fit.seed = j.at("seed").get<std::uint64_t>();
    return fit;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("bad fit JSON: ") + e.what());
  }
}

std::string cv_result_to_json(const CvResult& cv) {
  JsonWriter w;
  w.begin_object();
  w.key("schema_version");
  w.value(1);
  w.key("scores");
  w.vector(cv.scores);
  w.key("by_fold");
  w.begin_array();
  for (const auto& f : cv.by_fold) w.vector(f);
  w.end_array();
  w.key("d_hat");
  w.value(cv.d_hat);
  w.key("d_max");
  w.value(cv.d_max);
  w.key("seed");
  w.value(cv.seed);
  w.end_object();
  return w.str();
}

CvResult cv_result_from_json(const std::string& text) {
  const auto score_list = [](const nlohmann::json& arr) {
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& x : arr)
      out.push_back(x.is_null() ? std::numeric_limits<double>::infinity()
                                : x.get<double>());
    return out;
  };
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    CvResult cv;
    cv.scores = score_list(j.at("scores"));
    for (const auto& f : j.at("by_fold")) cv.by_fold.push_back(score_list(f));
    cv.d_hat = j.at("d_hat").get<int>();
    cv.d_max = j.at("d_max").get<int>();
    cv.seed = j.at("seed").get<std::uint64_t>();
    return cv;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("bad CV JSON: ") + e.what());
  }
}

std::string metric_report_to_json(const MetricReport& report) {
  JsonWriter w;
  w.begin_object();
  w.key("schema_version");
  w.value(1);
  auto opt = [&](const char* k, const std::optional<double>& v) {
    w.key(k);
    if (v) w.value(*v); else w.null();
  };
  opt("rank_correlation", report.rank_correlation);
  opt("classification_rate", report.classification_rate);
  if (report.has_benefit) {
    opt("delta_plus", report.benefit.delta_plus);
    opt("se_plus", report.benefit.se_plus);
    opt("delta_minus", report.benefit.delta_minus);
    opt("se_minus", report.benefit.se_minus);
    w.key("frac_plus");
    w.value(report.benefit.frac_plus);
    w.key("frac_minus");
    w.value(report.benefit.frac_minus);
  } else {
    opt("delta_plus", std::nullopt);
    opt("se_plus", std::nullopt);
    opt("delta_minus", std::nullopt);
    opt("se_minus", std::nullopt);
    opt("frac_plus", std::nullopt);
    opt("frac_minus", std::nullopt);
  }
  w.end_object();
  return w.str();
}

}  // namespace imave
