#include "lalg/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "lalg/transgression.hpp"

namespace lalg {

namespace fs = std::filesystem;
using boost::property_tree::ptree;
using json = nlohmann::json;

namespace {

const std::vector<std::string> kKinds{"params", "chart", "algebroid", "fibration", "cube", "task"};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

ptree* find_child(ptree& t, const std::string& key) {
  for (auto& [k, v] : t)
    if (k == key) return &v;
  return nullptr;
}

const ptree* find_child(const ptree& t, const std::string& key) {
  for (const auto& [k, v] : t)
    if (k == key) return &v;
  return nullptr;
}

std::string expand(const std::string& value, const ptree* params, const std::string& where) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto open = value.find("${", pos);
    if (open == std::string::npos) break;
    auto close = value.find('}', open);
    if (close == std::string::npos) throw ConfigError(where + ": unterminated ${");
    std::string name = value.substr(open + 2, close - open - 2);
    const ptree* p = params ? find_child(*params, name) : nullptr;
    if (!p) throw ConfigError(where + ": unknown parameter '" + name + "'");
    out += value.substr(pos, open - pos) + p->data();
    pos = close + 1;
  }
  return out + value.substr(pos);
}

// Typed access to one section, with errors naming it.
class Sec {
 public:
  Sec(const ptree& s, std::string kind, std::string name) : s_(s), kind_(std::move(kind)), name_(std::move(name)) {}

  std::string where() const { return kind_ + " '" + name_ + "'"; }
  std::string where(const std::string& key) const { return where() + ", key '" + key + "'"; }
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(where() + ": " + msg); }

  bool has(const std::string& key) const { return find_child(s_, key) != nullptr; }
  std::string str(const std::string& key) const {
    const ptree* c = find_child(s_, key);
    if (!c) fail("missing key '" + key + "'");
    return trim(c->data());
  }
  std::string str(const std::string& key, const std::string& dflt) const { return has(key) ? str(key) : dflt; }

  double num(const std::string& key) const { return to_num(str(key), key); }
  double num(const std::string& key, double dflt) const { return has(key) ? num(key) : dflt; }
  int integer(const std::string& key) const {
    double v = num(key);
    if (v != std::floor(v)) throw ConfigError(where(key) + ": expected an integer");
    return static_cast<int>(v);
  }
  int integer(const std::string& key, int dflt) const { return has(key) ? integer(key) : dflt; }
  bool flag(const std::string& key, bool dflt) const {
    if (!has(key)) return dflt;
    std::string v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(where(key) + ": expected true or false");
  }
  std::vector<double> nums(const std::string& key) const {
    std::vector<double> out;
    for (const auto& p : split(str(key), ',')) out.push_back(to_num(p, key));
    return out;
  }
  std::vector<std::string> names(const std::string& key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    for (const auto& p : split(str(key), ','))
      if (!p.empty()) out.push_back(p);
    return out;
  }
  Expr expr(const std::string& text, const std::string& key) const {
    try {
      return parse(text);
    } catch (const ParseError& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }
  std::vector<Expr> exprs(const std::string& key) const {
    std::vector<Expr> out;
    for (const auto& p : split(str(key), ',')) out.push_back(expr(p, key));
    return out;
  }
  Algebroid::Matrix matrix(const std::string& key) const {
    Algebroid::Matrix out;
    for (const auto& r : split(str(key), ';')) {
      std::vector<Expr> row;
      for (const auto& p : split(r, ',')) row.push_back(expr(p, key));
      out.push_back(std::move(row));
    }
    return out;
  }
  const ptree& raw() const { return s_; }

 private:
  double to_num(const std::string& text, const std::string& key) const {
    try {
      std::size_t used = 0;
      double v = std::stod(text, &used);
      if (trim(text.substr(used)).empty()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(where(key) + ": '" + text + "' is not a number");
  }

  const ptree& s_;
  std::string kind_, name_;
};

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// Pi from pi_I_J keys (1-based, I < J).
Algebroid::Matrix bivector(const Sec& s, int m) {
  Algebroid::Matrix pi(static_cast<std::size_t>(m), std::vector<Expr>(static_cast<std::size_t>(m)));
  for (const auto& [k, v] : s.raw()) {
    if (k.rfind("pi_", 0) != 0) continue;
    auto ij = split(k.substr(3), '_');
    int i = 0, j = 0;
    if (ij.size() != 2 || std::sscanf(ij[0].c_str(), "%d", &i) != 1 || std::sscanf(ij[1].c_str(), "%d", &j) != 1 || i < 1 ||
        j < 1 || i > m || j > m || i == j)
      s.fail("bad bivector key '" + k + "' (expected pi_I_J with 1 <= I, J <= " + std::to_string(m) + ")");
    Expr e = s.expr(trim(v.data()), k);
    pi[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)] = e;
    pi[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(i - 1)] = -e;
  }
  return pi;
}

int index_key(const Sec& s, const std::string& key, const std::string& prefix, int hi) {
  int i = 0;
  if (std::sscanf(key.c_str() + prefix.size(), "%d", &i) != 1 || i < 1 || i > hi || key != prefix + std::to_string(i))
    s.fail("bad key '" + key + "'");
  return i - 1;
}

std::pair<int, int> pair_key(const Sec& s, const std::string& key, const std::string& prefix, int hi) {
  auto ij = split(key.substr(prefix.size()), '_');
  int i = 0, j = 0;
  if (ij.size() != 2 || std::sscanf(ij[0].c_str(), "%d", &i) != 1 || std::sscanf(ij[1].c_str(), "%d", &j) != 1 || i < 1 ||
      j <= i || j > hi)
    s.fail("bad key '" + key + "' (expected " + prefix + "I_J with I < J <= " + std::to_string(hi) + ")");
  return {i - 1, j - 1};
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, const ptree*>> Config::sections(const std::string& kind) const {
  std::vector<std::pair<std::string, const ptree*>> out;
  for (const auto& [k, v] : tree) {
    auto colon = k.find(':');
    if (colon != std::string::npos && k.substr(0, colon) == kind) out.emplace_back(k.substr(colon + 1), &v);
  }
  return out;
}

Config load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  Config cfg;
  cfg.path = path;
  cfg.overrides = overrides;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string hashed = bytes;
  for (const auto& o : overrides) hashed += "\n--set " + o;
  cfg.hash = fnv1a(hashed);

  try {
    std::istringstream ss(bytes);
    boost::property_tree::ini_parser::read_ini(ss, cfg.tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(path.string() + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  for (const auto& [k, v] : cfg.tree) {
    if (!v.data().empty()) throw ConfigError(path.string() + ": key '" + k + "' outside a section");
    auto colon = k.find(':');
    std::string kind = colon == std::string::npos ? k : k.substr(0, colon);
    if (std::find(kKinds.begin(), kKinds.end(), kind) == kKinds.end())
      throw ConfigError(path.string() + ": unknown section kind '" + kind + "' in [" + k + "]");
    if (kind == "params" && colon != std::string::npos) throw ConfigError(path.string() + ": [params] takes no name");
    if (kind != "params" && (colon == std::string::npos || colon + 1 == k.size()))
      throw ConfigError(path.string() + ": section [" + k + "] needs a name, as in [" + kind + ":NAME]");
  }

  for (const auto& o : overrides) {
    auto eq = o.find('=');
    auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ConfigError("override '" + o + "': expected section.key=value");
    std::string sec = trim(o.substr(0, dot)), key = trim(o.substr(dot + 1, eq - dot - 1)), value = trim(o.substr(eq + 1));
    ptree* s = find_child(cfg.tree, sec);
    if (!s) throw ConfigError("override '" + o + "': no section [" + sec + "]");
    if (ptree* c = find_child(*s, key))
      c->data() = value;
    else
      s->push_back({key, ptree(value)});
  }

  // parameters may use earlier parameters
  if (ptree* params = find_child(cfg.tree, "params")) {
    ptree done;
    for (auto& [key, val] : *params) {
      val.data() = expand(val.data(), &done, "[params] " + key);
      done.push_back({key, ptree(val.data())});
    }
  }
  const ptree* params = find_child(cfg.tree, "params");
  for (auto& [k, v] : cfg.tree) {
    if (k == "params") continue;
    for (auto& [key, val] : v) val.data() = expand(val.data(), params, "[" + k + "] " + key);
  }
  return cfg;
}

void write_atomically(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------

Workspace::Workspace(Config cfg) : cfg_(std::move(cfg)) {}

const ptree& Workspace::section(const std::string& kind, const std::string& name) const {
  const ptree* s = find_child(cfg_.tree, kind + ":" + name);
  if (!s) {
    std::string msg = "no " + kind + " named '" + name + "'";
    if (!building_.empty()) msg += " (referenced from " + building_.back() + ")";
    throw ConfigError(msg);
  }
  return *s;
}

void Workspace::enter(const std::string& key) {
  if (std::find(building_.begin(), building_.end(), key) != building_.end()) {
    std::string chain;
    for (const auto& b : building_) chain += b + " -> ";
    throw ConfigError("circular reference: " + chain + key);
  }
  building_.push_back(key);
}

void Workspace::leave(const std::string& key) {
  if (!building_.empty() && building_.back() == key) building_.pop_back();
}

namespace {

struct Guard {
  std::function<void()> done;
  ~Guard() { done(); }
};

template <class F>
auto wrap(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const UnboundVariable& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

const Chart& Workspace::chart(const std::string& name) {
  if (auto it = charts_.find(name); it != charts_.end()) return it->second;
  Sec s(section("chart", name), "chart", name);
  auto coords = s.names("coords");
  if (!s.has("coords")) s.fail("missing key 'coords'");
  auto bound = [&](const std::string& key, double dflt) {
    std::vector<double> v = s.has(key) ? s.nums(key) : std::vector<double>{dflt};
    if (v.size() == 1) v.assign(coords.size(), v[0]);
    if (v.size() != coords.size()) s.fail("'" + key + "' needs one value or one per coordinate");
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
  };
  Eigen::VectorXd lo = bound("lo", -1.0), hi = bound("hi", 1.0);
  if ((hi.array() < lo.array()).any()) s.fail("hi must not be below lo");
  return charts_.emplace(name, wrap(s.where(), [&] { return Chart(coords, lo, hi); })).first->second;
}

const Algebroid& Workspace::algebroid(const std::string& name) {
  if (auto it = algebroids_.find(name); it != algebroids_.end()) return it->second;
  const std::string key = "algebroid:" + name;
  enter(key);
  Guard g{[&] { leave(key); }};
  Sec s(section("algebroid", name), "algebroid", name);
  const std::string kind = s.str("kind");
  Algebroid A = wrap(s.where(), [&]() -> Algebroid {
    if (kind == "tangent") return make_tangent(chart(s.str("chart")));
    if (kind == "lie_algebra") {
      std::string spec = s.str("constants");
      if (spec == "so3") return make_lie_algebra(so3_constants());
      int r = s.integer("dim");
      std::vector<std::vector<std::vector<double>>> c(
          static_cast<std::size_t>(r), std::vector<std::vector<double>>(static_cast<std::size_t>(r), std::vector<double>(static_cast<std::size_t>(r), 0.0)));
      for (const auto& entry : split(spec, ';')) {
        if (entry.empty()) continue;
        std::istringstream in(entry);
        int i = 0, j = 0, l = 0;
        double v = 0.0;
        if (!(in >> i >> j >> l >> v) || i < 1 || j < 1 || l < 1 || i > r || j > r || l > r || i == j)
          s.fail("constants entries are 'I J L value' with 1-based indices");
        c[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(l - 1)] = v;
        c[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(l - 1)] = -v;
      }
      return make_lie_algebra(c);
    }
    if (kind == "cotangent_poisson" || kind == "jacobi_extension") {
      const Chart& c = chart(s.str("chart"));
      auto pi = bivector(s, c.dim());
      return kind == "cotangent_poisson" ? make_cotangent_poisson(c, pi) : make_jacobi_extension(c, pi);
    }
    if (kind == "rep_extension") {
      const Algebroid& A = algebroid(s.str("base"));
      const int d = s.integer("rank"), r = A.rank();
      std::vector<Algebroid::Matrix> action(static_cast<std::size_t>(r),
                                            Algebroid::Matrix(static_cast<std::size_t>(d), std::vector<Expr>(static_cast<std::size_t>(d))));
      std::vector<std::vector<std::vector<Expr>>> lambda(static_cast<std::size_t>(r), std::vector<std::vector<Expr>>(static_cast<std::size_t>(r)));
      for (int i = 0; i < r; ++i)
        for (int j = i + 1; j < r; ++j) lambda[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::vector<Expr>(static_cast<std::size_t>(d));
      for (const auto& [k, v] : s.raw()) {
        if (k.rfind("action_", 0) == 0) {
          int i = index_key(s, k, "action_", r);
          auto M = s.matrix(k);
          if (static_cast<int>(M.size()) != d) s.fail("'" + k + "' must be " + std::to_string(d) + " x " + std::to_string(d));
          for (const auto& row : M)
            if (static_cast<int>(row.size()) != d) s.fail("'" + k + "' must be " + std::to_string(d) + " x " + std::to_string(d));
          action[static_cast<std::size_t>(i)] = M;
        } else if (k.rfind("lambda_", 0) == 0) {
          auto [i, j] = pair_key(s, k, "lambda_", r);
          auto e = s.exprs(k);
          if (static_cast<int>(e.size()) != d) s.fail("'" + k + "' needs " + std::to_string(d) + " entries");
          lambda[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = e;
        }
      }
      return make_rep_extension(A, action, lambda);
    }
    if (kind == "product") return make_product(algebroid(s.str("base")), algebroid(s.str("factor")));
    if (kind == "explicit") {
      const Chart& c = chart(s.str("chart"));
      auto frame = s.names("frame");
      const int r = static_cast<int>(frame.size()), m = c.dim();
      if (r == 0) s.fail("missing or empty 'frame'");
      Algebroid::Matrix anchor(static_cast<std::size_t>(r), std::vector<Expr>(static_cast<std::size_t>(m)));
      std::vector<std::vector<std::vector<Expr>>> st(static_cast<std::size_t>(r), std::vector<std::vector<Expr>>(static_cast<std::size_t>(r)));
      for (int i = 0; i < r; ++i)
        for (int j = i + 1; j < r; ++j) st[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::vector<Expr>(static_cast<std::size_t>(r));
      for (const auto& [k, v] : s.raw()) {
        if (k.rfind("anchor_", 0) == 0) {
          int i = index_key(s, k, "anchor_", r);
          auto e = s.exprs(k);
          if (static_cast<int>(e.size()) != m) s.fail("'" + k + "' needs " + std::to_string(m) + " entries");
          anchor[static_cast<std::size_t>(i)] = e;
        } else if (k.rfind("bracket_", 0) == 0) {
          auto [i, j] = pair_key(s, k, "bracket_", r);
          auto e = s.exprs(k);
          if (static_cast<int>(e.size()) != r) s.fail("'" + k + "' needs " + std::to_string(r) + " entries");
          st[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = e;
        }
      }
      return Algebroid(c, frame, anchor, st);
    }
    s.fail("unknown kind '" + kind + "'");
  });
  return algebroids_.emplace(name, std::move(A)).first->second;
}

const Fibration& Workspace::fibration(const std::string& name) {
  if (auto it = fibrations_.find(name); it != fibrations_.end()) return it->second;
  const std::string key = "fibration:" + name;
  enter(key);
  Guard g{[&] { leave(key); }};
  Sec s(section("fibration", name), "fibration", name);
  const std::string kind = s.str("kind");
  Fibration F = wrap(s.where(), [&]() -> Fibration {
    Fibration out;
    if (kind == "extension")
      out = extension_fibration(algebroid(s.str("total")), algebroid(s.str("base")), s.integer("kernel_rank"));
    else if (kind == "product")
      out = product_fibration(algebroid(s.str("base")), algebroid(s.str("factor")));
    else if (kind == "explicit")
      return make_fibration(algebroid(s.str("total")), algebroid(s.str("base")), s.matrix("pi"),
                            s.has("sigma") ? s.matrix("sigma") : Algebroid::Matrix{},
                            s.has("kernel") ? s.matrix("kernel") : Algebroid::Matrix{});
    else
      s.fail("unknown kind '" + kind + "'");
    if (s.has("sigma")) out = with_splitting(out, s.matrix("sigma"));
    return out;
  });
  return fibrations_.emplace(name, std::move(F)).first->second;
}

const Cube& Workspace::cube(const std::string& name) {
  if (auto it = cubes_.find(name); it != cubes_.end()) return it->second;
  const std::string key = "cube:" + name;
  enter(key);
  Guard g{[&] { leave(key); }};
  Sec s(section("cube", name), "cube", name);
  const std::string kind = s.str("kind");
  const ptree* params = find_child(cfg_.tree, "params");
  int dflt_N = 128;
  if (params)
    if (const ptree* p = find_child(*params, "N")) dflt_N = std::stoi(p->data());
  Cube c = wrap(s.where(), [&]() -> Cube {
    if (kind == "concat") {
      const Cube& first = cube(s.str("first"));
      const Cube& second = cube(s.str("second"));
      return concat(second, first, s.integer("axis", 1));
    }
    if (kind == "reverse") return reverse(cube(s.str("of")), s.integer("axis", 1));
    const Algebroid& A = algebroid(s.str("algebroid"));
    if (kind == "file") return load_cube(A, (cfg_.path.parent_path() / s.str("path")).string());
    const int n = s.integer("order", 2), N = s.integer("N", dflt_N);
    if (kind == "tangent_lift")
      return tangent_lift(A, s.exprs("map"), n, N, s.has("sigma") ? s.matrix("sigma") : Algebroid::Matrix{});
    if (kind == "from_sections") {
      TimeSections ts{A, n, {}};
      for (int k = 1; k <= n; ++k) ts.alphas.emplace_back(A, s.exprs("section_" + std::to_string(k)));
      auto x0 = s.has("basepoint") ? s.nums("basepoint") : std::vector<double>{};
      std::vector<int> order;
      for (double v : s.has("axis_order") ? s.nums("axis_order") : std::vector<double>{}) order.push_back(static_cast<int>(v) - 1);
      return cube_from_sections(ts, Eigen::Map<Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(x0.size())), N, order);
    }
    if (kind == "explicit") {
      auto tn = time_names(n);
      Grid grid(n, N);
      auto sample = [&](const std::vector<Expr>& ex, int cols, const std::string& k) {
        if (static_cast<int>(ex.size()) != cols) s.fail("'" + k + "' needs " + std::to_string(cols) + " entries");
        ProgramVector prog(ex, tn);
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> M(static_cast<Eigen::Index>(grid.size()), cols);
        for (std::size_t idx = 0; idx < grid.size(); ++idx) {
          Eigen::VectorXd t = grid.point(idx);
          if (cols > 0) prog(std::span<const double>(t.data(), static_cast<std::size_t>(t.size())), M.row(static_cast<Eigen::Index>(idx)).data());
        }
        return Eigen::MatrixXd(M);
      };
      Eigen::MatrixXd gamma = A.dim() > 0 ? sample(s.exprs("gamma"), A.dim(), "gamma") : Eigen::MatrixXd(grid.size(), 0);
      std::vector<Eigen::MatrixXd> comps;
      for (int k = 1; k <= n; ++k) {
        std::string ck = "component_" + std::to_string(k);
        comps.push_back(sample(s.exprs(ck), A.rank(), ck));
      }
      return Cube(A, n, N, gamma, comps);
    }
    s.fail("unknown kind '" + kind + "'");
  });
  return cubes_.emplace(name, std::move(c)).first->second;
}

void Workspace::validate() {
  for (const auto& [name, sec] : cfg_.sections("chart")) chart(name);
  for (const auto& [name, sec] : cfg_.sections("algebroid")) algebroid(name);
  for (const auto& [name, sec] : cfg_.sections("fibration")) fibration(name);

  // cube references without building
  std::vector<std::string> stack;
  std::function<void(const std::string&)> check_cube = [&](const std::string& name) {
    if (std::find(stack.begin(), stack.end(), name) != stack.end()) {
      std::string chain;
      for (const auto& b : stack) chain += "cube:" + b + " -> ";
      throw ConfigError("circular reference: " + chain + "cube:" + name);
    }
    Sec s(section("cube", name), "cube", name);
    stack.push_back(name);
    const std::string kind = s.str("kind");
    if (kind == "concat") {
      check_cube(s.str("first"));
      check_cube(s.str("second"));
    } else if (kind == "reverse") {
      check_cube(s.str("of"));
    } else if (kind == "tangent_lift" || kind == "from_sections" || kind == "explicit" || kind == "file") {
      if (!find_child(cfg_.tree, "algebroid:" + s.str("algebroid")))
        s.fail("unknown algebroid '" + s.str("algebroid") + "'");
    } else {
      s.fail("unknown kind '" + kind + "'");
    }
    stack.pop_back();
  };
  for (const auto& [name, sec] : cfg_.sections("cube")) check_cube(name);

  static const std::map<std::string, std::vector<std::string>> refs{
      {"check", {}},
      {"flow", {"algebroid"}},
      {"lift", {"fibration", "cube"}},
      {"transgress", {"fibration", "sphere"}},
      {"monodromy", {"algebroid"}},
      {"decompose", {"fibration", "path"}}};
  for (const auto& [name, sec] : cfg_.sections("task")) {
    Sec s(*sec, "task", name);
    std::string type = s.str("type");
    auto it = refs.find(type);
    if (it == refs.end()) s.fail("unknown type '" + type + "'");
    auto need = [&](const std::string& key, const std::string& kind) {
      std::string target = s.str(key);
      if (!find_child(cfg_.tree, kind + ":" + target)) s.fail("unknown " + kind + " '" + target + "'");
    };
    for (const auto& key : it->second) need(key, key == "sphere" || key == "path" ? "cube" : key);
    if (type == "check") {
      int count = 0;
      for (const char* k : {"algebroid", "fibration", "cube"})
        if (s.has(k)) {
          ++count;
          need(k, k);
        }
      if (count != 1) s.fail("a check names exactly one of algebroid, fibration, cube");
    }
    if (type == "monodromy")
      for (const auto& gname : s.names("generators"))
        if (!find_child(cfg_.tree, "cube:" + gname)) s.fail("unknown cube '" + gname + "'");
  }
}

std::vector<std::string> Workspace::task_names() const {
  std::vector<std::string> out;
  for (const auto& [name, sec] : cfg_.sections("task")) out.push_back(name);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Checks {
  json j = json::object();
  bool pass = true;
  void add(const std::string& name, double value, double tol, bool ok) {
    j[name] = {{"value", value}, {"tol", tol}, {"pass", ok}};
    pass = pass && ok;
  }
  void below(const std::string& name, double value, double tol) { add(name, value, tol, value < tol); }
};

}  // namespace

Workspace::TaskResult Workspace::run_task(const std::string& name) {
  Sec s(section("task", name), "task", name);
  const std::string type = s.str("type");
  const auto seed = static_cast<std::uint64_t>(s.integer("seed", 42));
  json echo = json::object();
  for (const auto& [k, v] : s.raw()) echo[k] = v.data();

  TaskResult out;
  out.name = name;
  json& rep = out.report;
  rep["name"] = name;
  rep["type"] = type;
  rep["task"] = echo;
  rep["config_hash"] = cfg_.hash;
  rep["overrides"] = cfg_.overrides;
  rep["seed"] = seed;
  Checks checks;
  json results = json::object();
  auto t0 = std::chrono::steady_clock::now();

  try {
    if (type == "check") {
      if (s.has("algebroid")) {
        AxiomReport a = check_axioms(algebroid(s.str("algebroid")), s.integer("samples", 200), s.num("tol", 1e-6), seed);
        results["jacobi"] = a.jacobi;
        results["anchor"] = a.anchor;
        results["samples"] = a.samples;
        results["witness"] = vec(a.witness);
        results["axioms_hold"] = a.pass;
        if (s.str("expect", "pass") == "fail")
          checks.add("expected_failure", a.pass ? 0.0 : 1.0, 0.0, !a.pass);
        else
          checks.add("axioms", std::max(a.jacobi, a.anchor), a.tol, a.pass);
      } else {
        // with expect = fail the individual checks go to results and the
        // task passes when at least one of them fails
        Checks inner;
        if (s.has("fibration")) {
          const Fibration& F = fibration(s.str("fibration"));
          const double tol = s.num("tol", 1e-6);
          FibrationReport v = lalg::validate(F, tol, s.integer("samples", 50), seed);
          for (const auto& it : v.items) inner.add(it.name, it.value, tol, it.pass);
          IdentityReport id = identity_residuals(F, s.integer("samples", 50), tol, seed);
          inner.below("curvature_identity", id.curvature_identity, tol);
          inner.below("bianchi", id.bianchi, tol);
        } else {
          const Cube& c = cube(s.str("cube"));
          const double tol = s.num("tol", 1e-2);
          MorphismResidual r = morphism_residual(c);
          results["structure_residual"] = r.structure;
          results["base_residual"] = r.base;
          results["N"] = c.resolution();
          inner.below("morphism_residual", r.max(), tol);
          std::string shape = s.str("shape", "cube");
          if (shape == "sphere") inner.below("sphere_boundary", sphere_boundary_defect(c), tol);
          if (shape == "homotopy") inner.below("homotopy_boundary", homotopy_boundary_defect(c), tol);
        }
        if (s.str("expect", "pass") == "fail") {
          results["checks"] = inner.j;
          checks.add("expected_failure", inner.pass ? 0.0 : 1.0, 0.0, !inner.pass);
        } else {
          checks = inner;
        }
      }
    } else if (type == "flow") {
      const Algebroid& A = algebroid(s.str("algebroid"));
      const int n = s.integer("order", 2), N = s.integer("N", 128);
      TimeSections ts{A, n, {}};
      for (int k = 1; k <= n; ++k) ts.alphas.emplace_back(A, s.exprs("section_" + std::to_string(k)));
      auto x0v = s.has("basepoint") ? s.nums("basepoint") : std::vector<double>{};
      Eigen::VectorXd x0 = Eigen::Map<Eigen::VectorXd>(x0v.data(), static_cast<Eigen::Index>(x0v.size()));
      results["commutation_residual"] = sections_commutation_residual(ts, s.integer("samples", 50), seed);
      Cube c = cube_from_sections(ts, x0, N);
      results["N"] = N;
      results["morphism_residual"] = morphism_residual(c).max();
      if (s.has("exact")) {
        auto ex = s.exprs("exact");
        if (static_cast<int>(ex.size()) != A.dim()) s.fail("'exact' needs one expression per coordinate");
        std::vector<std::string> layout = time_names(n);
        ProgramVector prog(ex, layout);
        double err = 0.0;
        std::vector<double> buf(ex.size());
        for (std::size_t idx = 0; idx < c.grid().size(); ++idx) {
          Eigen::VectorXd t = c.grid().point(idx);
          prog(std::span<const double>(t.data(), static_cast<std::size_t>(t.size())), buf.data());
          for (int a = 0; a < A.dim(); ++a) err = std::max(err, std::abs(buf[static_cast<std::size_t>(a)] - c.gamma()(static_cast<Eigen::Index>(idx), a)));
        }
        checks.below("exact_path", err, s.num("tol", 1e-8));
      }
      if (n >= 2) {
        std::vector<int> rev(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) rev[static_cast<std::size_t>(k)] = n - 1 - k;
        Cube r = cube_from_sections(ts, x0, N, rev);
        checks.below("axis_order_swap", (c.gamma() - r.gamma()).cwiseAbs().maxCoeff(), s.num("swap_tol", 1e-6));
      }
    } else if (type == "lift") {
      const Fibration& F = fibration(s.str("fibration"));
      const Cube& c = cube(s.str("cube"));
      auto x0v = s.has("basepoint") ? s.nums("basepoint") : std::vector<double>{};
      Eigen::VectorXd x0 = x0v.empty() ? Eigen::VectorXd(c.basepoint())
                                       : Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(x0v.data(), static_cast<Eigen::Index>(x0v.size())));
      Cube lifted = lift_cube(F, c, zero_cube(F.total, c.order() - 1, c.resolution(), x0));
      std::vector<Expr> flat;
      for (const auto& r : F.pi) flat.insert(flat.end(), r.begin(), r.end());
      ProgramVector P(flat, F.total.chart().names);
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Pm(F.base.rank(), F.total.rank());
      double dev = 0.0;
      for (std::size_t idx = 0; idx < lifted.grid().size(); ++idx) {
        Eigen::VectorXd x = lifted.gamma().row(static_cast<Eigen::Index>(idx)).transpose();
        P(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), Pm.data());
        dev = std::max(dev, (x.head(F.p()) - c.gamma().row(static_cast<Eigen::Index>(idx)).transpose()).norm());
        for (int k = 0; k < c.order(); ++k)
          dev = std::max(dev, (Pm * lifted.component(k).row(static_cast<Eigen::Index>(idx)).transpose() -
                               c.component(k).row(static_cast<Eigen::Index>(idx)).transpose()).norm());
      }
      const int N = c.resolution();
      results["N"] = N;
      results["lift_morphism_residual"] = morphism_residual(lifted).max();
      checks.below("projection_deviation", dev, 5.0 / (N * N));
      if (s.has("save")) save_cube(lifted, (cfg_.path.parent_path() / s.str("save")).string());
    } else if (type == "transgress") {
      const Fibration& F = fibration(s.str("fibration"));
      const Cube& S = cube(s.str("sphere"));
      const std::string method = s.str("method", "both");
      const double tol = s.num("tol", 1e-2);
      std::vector<double> expect = s.has("expect") ? s.nums("expect") : std::vector<double>{};
      auto compare = [&](const TransgressionResult& r, const std::string& tag) {
        if (expect.empty()) return;
        if (static_cast<int>(expect.size()) != r.value.size()) s.fail("'expect' needs one value per kernel dimension");
        Eigen::VectorXd e = Eigen::Map<Eigen::VectorXd>(expect.data(), static_cast<Eigen::Index>(expect.size()));
        checks.below(tag + "_vs_expected", (r.value - e).norm(), tol);
      };
      results["N"] = S.resolution();
      TransgressionResult fr, lr;
      if (method == "formula" || method == "both") {
        fr = transgress2_formula(F, S);
        results["formula"] = to_json(fr);
        compare(fr, "formula");
      }
      if (method == "lift" || method == "both") {
        LiftTransgression l = transgress_lift(F, S);
        lr = l.result;
        results["lift"] = to_json(lr);
        results["lift"]["projection_defect"] = l.projection_defect;
        compare(lr, "lift");
      }
      if (method == "both")
        checks.below("method_agreement", (fr.value - lr.value).norm(), std::max(tol, 3.0 * std::max(fr.error_estimate, lr.error_estimate)));
      if (method != "formula" && method != "lift" && method != "both") s.fail("method must be formula, lift or both");
    } else if (type == "monodromy") {
      const Algebroid& A = algebroid(s.str("algebroid"));
      std::vector<Cube> gens;
      auto labels = s.names("generators");
      for (const auto& gname : labels) gens.push_back(cube(gname));
      MonodromyReport m = monodromy_group(A, s.matrix("sigma"), gens, labels);
      results["monodromy"] = to_json(m);
      const double tol = s.num("tol", 2e-2);
      for (std::size_t k = 0; k < labels.size(); ++k) {
        std::string ek = "expect_" + labels[k];
        if (!s.has(ek)) continue;
        auto e = s.nums(ek);
        if (static_cast<int>(e.size()) != m.periods[k].value.size()) s.fail("'" + ek + "' has the wrong length");
        Eigen::VectorXd ev = Eigen::Map<Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size()));
        checks.below("period_" + labels[k], (m.periods[k].value - ev).norm(), tol);
      }
      if (s.has("expect_rank")) checks.add("lattice_rank", m.lattice_rank, 0.0, m.lattice_rank == s.integer("expect_rank"));
    } else if (type == "decompose") {
      const Fibration& F = fibration(s.str("fibration"));
      const Cube& a = cube(s.str("path"));
      PathDecomposition d = decompose_path(F, a);
      const double tol = s.num("tol", 1e-3);
      results["N"] = a.resolution();
      results["input_residual"] = d.input_residual;
      results["k_projection_defect"] = d.k_projection_defect;
      results["h_vertical_defect"] = d.h_vertical_defect;
      results["witness_residual"] = d.witness_residual;
      results["witness_boundary_defect"] = d.witness_boundary_defect;
      checks.below("witness_is_homotopy", std::max(d.witness_residual, d.witness_boundary_defect), tol);
      checks.below("endpoint_gap", d.endpoint_gap, s.num("endpoint_tol", 1e-6));
    } else {
      s.fail("unknown type '" + type + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    rep["error"] = e.what();
    checks.pass = false;
  }

  rep["checks"] = checks.j;
  rep["results"] = results;
  rep["pass"] = checks.pass;
  rep["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.pass = checks.pass;
  return out;
}

// ---------------------------------------------------------------------------

void Workspace::describe(std::ostream& os) {
  validate();
  auto row = [&](const std::vector<std::string>& cells) {
    const int widths[] = {12, 22, 20, 40};
    for (std::size_t k = 0; k < cells.size(); ++k)
      if (k + 1 < cells.size())
        os << std::left << std::setw(widths[k]) << cells[k] << " ";
      else
        os << cells[k];
    os << "\n";
  };
  row({"entity", "name", "kind", "details"});
  for (const auto& [name, sec] : cfg_.sections("chart")) {
    const Chart& c = chart(name);
    std::ostringstream d;
    d << "dim " << c.dim() << " (";
    for (std::size_t a = 0; a < c.names.size(); ++a) d << (a ? ", " : "") << c.names[a];
    d << ")";
    row({"chart", name, "box", d.str()});
  }
  for (const auto& [name, sec] : cfg_.sections("algebroid")) {
    const Algebroid& A = algebroid(name);
    row({"algebroid", name, Sec(*sec, "algebroid", name).str("kind"),
         "rank " + std::to_string(A.rank()) + ", dim " + std::to_string(A.dim())});
  }
  for (const auto& [name, sec] : cfg_.sections("fibration")) {
    const Fibration& F = fibration(name);
    row({"fibration", name, Sec(*sec, "fibration", name).str("kind"),
         "rank " + std::to_string(F.total.rank()) + " -> " + std::to_string(F.base.rank()) + ", kernel " +
             std::to_string(F.kernel_rank())});
  }
  for (const auto& [name, sec] : cfg_.sections("cube")) {
    Sec s(*sec, "cube", name);
    std::string d = s.has("algebroid") ? "in " + s.str("algebroid") : "";
    if (s.has("order")) d += ", order " + s.str("order");
    if (s.has("N")) d += ", N " + s.str("N");
    row({"cube", name, s.str("kind"), d});
  }
  for (const auto& [name, sec] : cfg_.sections("task")) {
    Sec s(*sec, "task", name);
    std::string d;
    for (const char* k : {"algebroid", "fibration", "cube", "sphere", "path", "generators"})
      if (s.has(k)) d += (d.empty() ? "" : ", ") + std::string(k) + " " + s.str(k);
    row({"task", name, s.str("type"), d});
  }
}

int run_config(const Config& cfg, const fs::path& out_dir, std::ostream& log) {
  Workspace ws(cfg);
  ws.validate();
  bool all = true;
  for (const auto& name : ws.task_names()) {
    auto r = ws.run_task(name);
    Sec s(*find_child(cfg.tree, "task:" + name), "task", name);
    fs::path file = out_dir / s.str("out", name + ".json");
    write_atomically(file, r.report.dump(2) + "\n");
    log << (r.pass ? "PASS " : "FAIL ") << name << "  (" << std::fixed << std::setprecision(2)
        << r.report["wall_time"].get<double>() << " s)";
    if (r.report.contains("error")) log << "  error: " << r.report["error"].get<std::string>();
    log << "\n";
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

}  // namespace lalg
