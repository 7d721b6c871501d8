#include "phaseopt/task.hpp"

#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "text_util.hpp"

namespace phaseopt {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr double kUnitTolerance = 1e-9;

struct Token {
  std::string_view text;
  int line;
};

std::vector<Token> tokenize(std::string_view source) {
  std::vector<Token> tokens;
  int line_no = 0;
  for (auto raw : text::split(source, '\n')) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) {
      raw = raw.substr(0, hash);
    }
    for (auto word : text::split_whitespace(raw)) {
      // Braces may be glued to neighbouring words.
      std::size_t start = 0;
      for (std::size_t i = 0; i <= word.size(); ++i) {
        if (i == word.size() || word[i] == '{' || word[i] == '}') {
          if (i > start) tokens.push_back({word.substr(start, i - start), line_no});
          if (i < word.size()) tokens.push_back({word.substr(i, 1), line_no});
          start = i + 1;
        }
      }
    }
  }
  return tokens;
}

class TokenStream {
 public:
  explicit TokenStream(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  bool done() const { return pos_ >= tokens_.size(); }
  const Token& peek() const { return tokens_[pos_]; }
  int line() const {
    if (tokens_.empty()) return 1;
    return done() ? tokens_.back().line : tokens_[pos_].line;
  }
  Token next() {
    if (done()) throw ParseError("unexpected end of file", line());
    return tokens_[pos_++];
  }
  void expect(std::string_view text) {
    const Token t = next();
    if (t.text != text) {
      throw ParseError(fmt::format("expected '{}', found '{}'", text, t.text),
                       t.line);
    }
  }
  bool next_is_pair() const {
    return !done() && peek().text.find('=') != std::string_view::npos;
  }

 private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

Eigen::Vector3d as_vector3(const std::vector<double>& v) {
  return {v[0], v[1], v[2]};
}

class ConstraintReader {
 public:
  ConstraintReader(const KinematicChain& chain, const std::vector<double>* q_init)
      : chain_(chain), q_init_(q_init) {}

  ConstraintSpec read(TokenStream& in) {
    const Token keyword = in.next();
    line_ = keyword.line;
    pairs_.clear();
    while (in.next_is_pair()) {
      const Token t = in.next();
      const auto eq = t.text.find('=');
      const auto key = t.text.substr(0, eq);
      if (!pairs_.emplace(key, t.text.substr(eq + 1)).second) {
        throw ParseError(fmt::format("repeated key '{}'", key), t.line);
      }
    }

    ConstraintSpec spec;
    const auto kw = keyword.text;
    if (kw == "PointAt") {
      PointAt c;
      c.link = link("link");
      c.target = vec3("target");
      c.tol = scalar("tol", 0.0);
      spec = c;
    } else if (kw == "VelocityZero") {
      spec = VelocityZero{scalar("tol", 0.0)};
    } else if (kw == "JointConfig") {
      JointConfig c;
      c.q_target = joint_vector("q_target");
      c.tol = scalar("tol", 0.0);
      spec = c;
    } else if (kw == "LineTrack") {
      LineTrack c;
      c.link = link("link");
      c.a = vec3("a");
      c.b = vec3("b");
      c.tol = scalar("tol", kDefaultLineTol);
      spec = c;
    } else if (kw == "BoxRegion") {
      BoxRegion c;
      c.link = link("link");
      c.lower = vec3("lower");
      c.upper = vec3("upper");
      spec = c;
    } else if (kw == "AxisAlign") {
      AxisAlign c;
      c.link = link("link");
      c.local_axis = vec3("local_axis");
      c.world_dir = vec3("world_dir");
      c.tol = scalar("tol", kDefaultAxisTol);
      spec = c;
    } else {
      throw ParseError(fmt::format("unknown constraint '{}'", kw), line_);
    }
    if (!pairs_.empty()) {
      throw ParseError(fmt::format("unknown key '{}' for {}",
                                   pairs_.begin()->first, kw),
                       line_);
    }
    try {
      validate_constraint(spec, chain_);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_);
    }
    return spec;
  }

 private:
  std::string_view take(std::string_view key) {
    auto it = pairs_.find(key);
    if (it == pairs_.end()) {
      throw ParseError(fmt::format("missing key '{}'", key), line_);
    }
    const auto value = it->second;
    pairs_.erase(it);
    return value;
  }

  std::string link(std::string_view key) {
    const auto name = take(key);
    if (!chain_.find_link(name)) {
      throw ParseError(fmt::format("unknown link '{}'", name), line_);
    }
    return std::string(name);
  }

  std::vector<double> list(std::string_view key, std::size_t arity) {
    const auto value = take(key);
    const auto parsed = text::parse_list(value);
    if (!parsed) {
      throw ParseError(fmt::format("malformed numbers in '{}'", key), line_);
    }
    if (parsed->size() != arity) {
      throw ParseError(fmt::format("'{}' expects {} values, got {}", key, arity,
                                   parsed->size()),
                       line_);
    }
    return *parsed;
  }

  Eigen::Vector3d vec3(std::string_view key) { return as_vector3(list(key, 3)); }

  std::vector<double> joint_vector(std::string_view key) {
    if (auto it = pairs_.find(key); it != pairs_.end() && it->second == "init") {
      pairs_.erase(it);
      if (q_init_ == nullptr) {
        throw ParseError("'init' used before the init line", line_);
      }
      return *q_init_;
    }
    return list(key, chain_.size());
  }

  double scalar(std::string_view key, double fallback) {
    auto it = pairs_.find(key);
    if (it == pairs_.end()) return fallback;
    const auto value = text::parse_double(it->second);
    if (!value) throw ParseError(fmt::format("'{}' expects a number", key), line_);
    pairs_.erase(it);
    return *value;
  }

  const KinematicChain& chain_;
  const std::vector<double>* q_init_;
  int line_ = 0;
  std::map<std::string_view, std::string_view, std::less<>> pairs_;
};

bool allowed_in_terminal(const ConstraintSpec& c) {
  return !std::holds_alternative<LineTrack>(c) && !std::holds_alternative<BoxRegion>(c);
}

bool allowed_in_path(const ConstraintSpec& c) {
  return !std::holds_alternative<VelocityZero>(c);
}

std::vector<ConstraintSpec> read_block(TokenStream& in, ConstraintReader& reader,
                                       bool terminal) {
  in.expect("{");
  std::vector<ConstraintSpec> out;
  while (true) {
    if (in.done()) throw ParseError("unterminated block", in.line());
    if (in.peek().text == "}") {
      in.next();
      return out;
    }
    const int line = in.peek().line;
    auto spec = reader.read(in);
    if (terminal && !allowed_in_terminal(spec)) {
      throw ParseError(fmt::format("{} is not allowed as a terminal constraint",
                                   constraint_keyword(spec)),
                       line);
    }
    if (!terminal && !allowed_in_path(spec)) {
      throw ParseError(fmt::format("{} is not allowed as a path constraint",
                                   constraint_keyword(spec)),
                       line);
    }
    out.push_back(std::move(spec));
  }
}

std::string join(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += fmt::format("{}", values[i]);
  }
  return out;
}

std::string join(const Eigen::Vector3d& v) {
  return fmt::format("{},{},{}", v.x(), v.y(), v.z());
}

std::string format_constraint(const ConstraintSpec& spec) {
  return std::visit(
      Overloaded{
          [](const PointAt& c) {
            return fmt::format("PointAt link={} target={} tol={}", c.link,
                               join(c.target), c.tol);
          },
          [](const VelocityZero& c) { return fmt::format("VelocityZero tol={}", c.tol); },
          [](const JointConfig& c) {
            return fmt::format("JointConfig q_target={} tol={}", join(c.q_target),
                               c.tol);
          },
          [](const LineTrack& c) {
            return fmt::format("LineTrack link={} a={} b={} tol={}", c.link,
                               join(c.a), join(c.b), c.tol);
          },
          [](const BoxRegion& c) {
            return fmt::format("BoxRegion link={} lower={} upper={}", c.link,
                               join(c.lower), join(c.upper));
          },
          [](const AxisAlign& c) {
            return fmt::format("AxisAlign link={} local_axis={} world_dir={} tol={}",
                               c.link, join(c.local_axis), join(c.world_dir), c.tol);
          },
      },
      spec);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

void require_link(const KinematicChain& chain, const std::string& link) {
  require(chain.find_link(link).has_value(), "unknown link '" + link + "'");
}

void require_unit(const Eigen::Vector3d& v, const char* what) {
  require(std::abs(v.norm() - 1.0) <= kUnitTolerance,
          std::string(what) + " must be a unit vector");
}

}  // namespace

std::string_view constraint_keyword(const ConstraintSpec& spec) {
  static constexpr std::string_view names[] = {"PointAt",   "VelocityZero",
                                               "JointConfig", "LineTrack",
                                               "BoxRegion", "AxisAlign"};
  return names[spec.index()];
}

void validate_constraint(const ConstraintSpec& spec, const KinematicChain& chain) {
  std::visit(
      Overloaded{
          [&](const PointAt& c) {
            require_link(chain, c.link);
            require(c.tol >= 0.0, "PointAt tol must be nonnegative");
          },
          [&](const VelocityZero& c) {
            require(c.tol >= 0.0, "VelocityZero tol must be nonnegative");
          },
          [&](const JointConfig& c) {
            require(c.q_target.size() == chain.size(),
                    "JointConfig q_target needs one value per joint");
            require(c.tol >= 0.0, "JointConfig tol must be nonnegative");
          },
          [&](const LineTrack& c) {
            require_link(chain, c.link);
            require(c.tol > 0.0, "LineTrack tol must be positive");
            require((c.b - c.a).norm() > 0.0, "LineTrack needs a != b");
          },
          [&](const BoxRegion& c) {
            require_link(chain, c.link);
            require((c.lower.array() < c.upper.array()).all(),
                    "BoxRegion needs lower < upper componentwise");
          },
          [&](const AxisAlign& c) {
            require_link(chain, c.link);
            require_unit(c.local_axis, "AxisAlign local_axis");
            require_unit(c.world_dir, "AxisAlign world_dir");
            require(c.tol >= 0.0, "AxisAlign tol must be nonnegative");
          },
      },
      spec);
}

void validate_task(const TaskSpec& task) {
  const auto& chain = task.chain;
  require(task.q_init.size() == chain.size(), "q_init needs one value per joint");
  for (std::size_t j = 0; j < chain.size(); ++j) {
    const auto& joint = chain.joint(j);
    require(task.q_init[j] >= joint.lower && task.q_init[j] <= joint.upper,
            "q_init outside the position limits of joint '" + joint.name + "'");
  }
  require(!task.phases.empty(), "a task needs at least one phase");
  for (const auto& phase : task.phases) {
    require(!phase.terminal.empty(),
            "phase '" + phase.name + "' has no terminal constraint");
    for (const auto& c : phase.terminal) {
      validate_constraint(c, chain);
      require(allowed_in_terminal(c), std::string(constraint_keyword(c)) +
                                          " is not allowed as a terminal constraint");
    }
    for (const auto& c : phase.path) {
      validate_constraint(c, chain);
      require(allowed_in_path(c), std::string(constraint_keyword(c)) +
                                      " is not allowed as a path constraint");
    }
  }
}

bool same_task(const TaskSpec& a, const TaskSpec& b) {
  if (a.chain.size() != b.chain.size()) return false;
  for (std::size_t j = 0; j < a.chain.size(); ++j) {
    const auto& x = a.chain.joint(j);
    const auto& y = b.chain.joint(j);
    if (x.name != y.name || x.kind != y.kind || x.axis != y.axis ||
        x.origin_translation != y.origin_translation ||
        x.origin_rpy != y.origin_rpy || x.lower != y.lower ||
        x.upper != y.upper || x.velocity_limit != y.velocity_limit ||
        x.acceleration_limit != y.acceleration_limit) {
      return false;
    }
  }
  return a.q_init == b.q_init && a.phases == b.phases &&
         a.global_path == b.global_path;
}

TaskSpec parse_task(std::string_view source, const KinematicChain& chain) {
  TaskSpec task;
  task.chain = chain;
  TokenStream in(tokenize(source));
  bool have_init = false;
  std::set<std::string> phase_names;
  std::vector<ConstraintSpec> global;

  while (!in.done()) {
    const Token head = in.next();
    if (head.text == "init") {
      if (have_init) throw ParseError("repeated init line", head.line);
      const Token t = in.next();
      if (!t.text.starts_with("q=")) {
        throw ParseError("init expects q=<v1,...,vn>", t.line);
      }
      const auto values = text::parse_list(t.text.substr(2));
      if (!values) throw ParseError("malformed numbers in init", t.line);
      if (values->size() != chain.size()) {
        throw ParseError(fmt::format("init expects {} values, got {}",
                                     chain.size(), values->size()),
                         t.line);
      }
      for (std::size_t j = 0; j < chain.size(); ++j) {
        const auto& joint = chain.joint(j);
        if ((*values)[j] < joint.lower || (*values)[j] > joint.upper) {
          throw ParseError(fmt::format("init value for '{}' outside its limits",
                                       joint.name),
                           t.line);
        }
      }
      task.q_init = *values;
      have_init = true;
    } else if (head.text == "global") {
      ConstraintReader reader(chain, have_init ? &task.q_init : nullptr);
      auto block = read_block(in, reader, false);
      global.insert(global.end(), block.begin(), block.end());
    } else if (head.text == "phase") {
      const Token name = in.next();
      if (name.text == "{" || name.text == "}") {
        throw ParseError("phase needs a name", name.line);
      }
      if (!phase_names.insert(std::string(name.text)).second) {
        throw ParseError(fmt::format("duplicate phase name '{}'", name.text),
                         name.line);
      }
      PhaseSpec phase;
      phase.name = std::string(name.text);
      ConstraintReader reader(chain, have_init ? &task.q_init : nullptr);
      in.expect("{");
      while (true) {
        const Token section = in.next();
        if (section.text == "}") break;
        if (section.text == "terminal") {
          auto block = read_block(in, reader, true);
          phase.terminal.insert(phase.terminal.end(), block.begin(), block.end());
        } else if (section.text == "path") {
          auto block = read_block(in, reader, false);
          phase.path.insert(phase.path.end(), block.begin(), block.end());
        } else {
          throw ParseError(fmt::format("expected 'terminal', 'path' or '}}', "
                                       "found '{}'",
                                       section.text),
                           section.line);
        }
      }
      if (phase.terminal.empty()) {
        throw ParseError(fmt::format("phase '{}' has no terminal constraint",
                                     phase.name),
                         name.line);
      }
      task.phases.push_back(std::move(phase));
    } else {
      throw ParseError(fmt::format("unexpected '{}'", head.text), head.line);
    }
  }
  if (!have_init) throw ParseError("missing init line", in.line());
  if (task.phases.empty()) throw ParseError("task defines no phases", in.line());

  task.global_path = global;
  for (auto& phase : task.phases) {
    phase.path.insert(phase.path.end(), global.begin(), global.end());
  }
  return task;
}

std::string serialize_task(const TaskSpec& task) {
  std::string out = "init q=" + join(task.q_init) + "\n";
  if (!task.global_path.empty()) {
    out += "global {\n";
    for (const auto& c : task.global_path) out += "  " + format_constraint(c) + "\n";
    out += "}\n";
  }
  const std::size_t shared = task.global_path.size();
  for (const auto& phase : task.phases) {
    out += "phase " + phase.name + " {\n  terminal {\n";
    for (const auto& c : phase.terminal) out += "    " + format_constraint(c) + "\n";
    out += "  }\n";
    const std::size_t local = phase.path.size() - std::min(shared, phase.path.size());
    if (local > 0) {
      out += "  path {\n";
      for (std::size_t i = 0; i < local; ++i) {
        out += "    " + format_constraint(phase.path[i]) + "\n";
      }
      out += "  }\n";
    }
    out += "}\n";
  }
  return out;
}

std::size_t row_count(const ConstraintSpec& spec, std::size_t joint_count) {
  return std::visit(
      Overloaded{
          [](const PointAt&) -> std::size_t { return 3; },
          [&](const VelocityZero&) -> std::size_t { return joint_count; },
          [&](const JointConfig&) -> std::size_t { return joint_count; },
          [](const LineTrack&) -> std::size_t { return 1; },
          [](const BoxRegion&) -> std::size_t { return 3; },
          [](const AxisAlign&) -> std::size_t { return 1; },
      },
      spec);
}

std::vector<ConstraintRow> lower_constraint(const ConstraintSpec& spec,
                                            ExpressionGraph& graph,
                                            const KinematicChain& chain,
                                            std::span<const ExprRef> q,
                                            std::span<const ExprRef> qdot) {
  std::vector<ConstraintRow> rows;
  auto expr = [&graph](ExprRef r) { return Expr(&graph, r); };
  std::visit(
      Overloaded{
          [&](const PointAt& c) {
            const auto p = fk_position(chain, c.link, graph, q);
            for (int i = 0; i < 3; ++i) {
              rows.push_back({p[i], c.target(i) - c.tol, c.target(i) + c.tol});
            }
          },
          [&](const VelocityZero& c) {
            for (auto v : qdot) rows.push_back({v, -c.tol, c.tol});
          },
          [&](const JointConfig& c) {
            for (std::size_t j = 0; j < q.size(); ++j) {
              rows.push_back({q[j], c.q_target[j] - c.tol, c.q_target[j] + c.tol});
            }
          },
          [&](const LineTrack& c) {
            // Squared distance to the line, divided by 2*tol so that the row
            // violation is measured in meters near the boundary.
            const auto p = fk_position(chain, c.link, graph, q);
            const Eigen::Vector3d dir = (c.b - c.a).normalized();
            std::array<Expr, 3> w;
            for (int i = 0; i < 3; ++i) w[i] = expr(p[i]) - c.a(i);
            const Expr along = w[0] * dir(0) + w[1] * dir(1) + w[2] * dir(2);
            std::array<Expr, 3> normal;
            for (int i = 0; i < 3; ++i) normal[i] = w[i] - along * dir(i);
            const Expr squared =
                square(normal[0]) + square(normal[1]) + square(normal[2]);
            rows.push_back({(squared * (0.5 / c.tol)).ref(), -kInfinity, 0.5 * c.tol});
          },
          [&](const BoxRegion& c) {
            const auto p = fk_position(chain, c.link, graph, q);
            for (int i = 0; i < 3; ++i) rows.push_back({p[i], c.lower(i), c.upper(i)});
          },
          [&](const AxisAlign& c) {
            const auto d = fk_axis(chain, c.link, c.local_axis, graph, q);
            Expr dot = expr(d[0]) * c.world_dir(0) + expr(d[1]) * c.world_dir(1) +
                       expr(d[2]) * c.world_dir(2);
            rows.push_back({dot.ref(), std::cos(c.tol), kInfinity});
          },
      },
      spec);
  return rows;
}

}  // namespace phaseopt
