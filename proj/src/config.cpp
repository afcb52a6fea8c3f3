#include "gritnet/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "gritnet/error.hpp"

namespace gritnet {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, sep)) parts.push_back(trim(part));
  return parts;
}

int to_int(const std::string& s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) fail(ErrorKind::config, "not an integer: '" + s + "'");
  return v;
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& part : split(text, ',')) {
    if (part.empty()) fail(ErrorKind::config, "empty entry in list '" + text + "'");
    const auto dash = part.find('-', 1);
    if (dash == std::string::npos) {
      out.push_back(to_int(part));
      continue;
    }
    const int lo = to_int(trim(part.substr(0, dash)));
    const int hi = to_int(trim(part.substr(dash + 1)));
    if (hi < lo) fail(ErrorKind::config, "descending range '" + part + "'");
    for (int v = lo; v <= hi; ++v) out.push_back(v);
  }
  if (out.empty()) fail(ErrorKind::config, "empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      fail(ErrorKind::config, "not a number: '" + part + "'");
    }
  }
  if (out.empty()) fail(ErrorKind::config, "empty list");
  return out;
}

std::size_t resolve_workers(std::size_t workers) {
  if (workers > 0) return workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

void ExperimentConfig::validate() const {
  if (embedding_dim < 1 || hidden_dim < 1) fail(ErrorKind::config, "model: dimensions must be >= 1");
  train.validate();
  adapt.validate();
  if (folds < 1) fail(ErrorKind::config, "train: folds must be >= 1");
  if (folds == 1 && !(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    fail(ErrorKind::config, "train: validation_fraction must be in (0, 1)");
  }
  if (target_folds < 2) fail(ErrorKind::config, "adapt: folds must be >= 2");
  if (logreg.epochs < 1 || !(logreg.learning_rate > 0) || !(logreg.l2 >= 0)) {
    fail(ErrorKind::config, "baseline: invalid optimizer settings");
  }
  if (seeds.empty()) fail(ErrorKind::config, "run: seed list is empty");
  if (source_students < 2 || target_students < 2) fail(ErrorKind::config, "students must be >= 2");
  if (!(shift.difficulty_multiplier > 0) || !(shift.pacing_multiplier > 0)) {
    fail(ErrorKind::config, "shift: multipliers must be positive");
  }
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  out << std::setprecision(17);
  const auto path = [](const std::optional<std::filesystem::path>& p) { return p ? p->string() : ""; };
  out << "data.source=" << path(source_dir) << "\ndata.target=" << path(target_dir)
      << "\nsource.spec=" << path(source_spec) << "\nsource.students=" << source_students
      << "\nshift=" << shift.delta_contents << ',' << shift.delta_quizzes << ',' << shift.delta_projects
      << ',' << shift.difficulty_multiplier << ',' << shift.pacing_multiplier << ','
      << (shift.base_rate ? std::to_string(*shift.base_rate) : "-")
      << "\ntarget.students=" << target_students << "\nmodel=" << embedding_dim << ',' << hidden_dim
      << "\ntrain=" << train.epochs << ',' << train.batch_size << ',' << train.learning_rate << ','
      << train.patience << ',' << folds << ',' << validation_fraction << "\nweeks=";
  for (int w : train.weeks) out << w << ';';
  out << "\nadapt=" << adapt.epochs << ',' << adapt.batch_size << ',' << adapt.learning_rate << ','
      << adapt.selection_fraction << ',' << target_folds << ',' << oracle << "\nthresholds=";
  for (double t : adapt.thresholds) out << t << ';';
  out << "\nbaseline=" << logreg.l2 << ',' << logreg.epochs << ',' << logreg.learning_rate << "\nseeds=";
  for (auto s : seeds) out << s << ';';
  // workers and the output directory do not change results
  out << '\n';
  return out.str();
}

std::uint64_t ExperimentConfig::hash() const {
  const auto text = canonical();
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

ExperimentConfig read_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::io, "config file '" + path.string() + "' not found");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ptree_error& e) {
    fail(ErrorKind::config, path.string() + ": " + e.what());
  }

  const std::map<std::string, std::set<std::string>> known = {
      {"data", {"source", "target"}},
      {"source", {"spec", "students"}},
      {"shift",
       {"delta_contents", "delta_quizzes", "delta_projects", "difficulty_multiplier", "pacing_multiplier",
        "base_rate"}},
      {"target", {"students"}},
      {"model", {"embedding_dim", "hidden_dim"}},
      {"train", {"epochs", "batch_size", "learning_rate", "patience", "weeks", "folds", "validation_fraction"}},
      {"adapt",
       {"thresholds", "epochs", "batch_size", "learning_rate", "selection_fraction", "folds", "oracle"}},
      {"baseline", {"l2", "epochs", "learning_rate"}},
      {"run", {"seeds", "workers", "out"}},
  };
  for (const auto& [section, body] : tree) {
    const auto it = known.find(section);
    if (it == known.end()) fail(ErrorKind::config, path.string() + ": unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) {
        fail(ErrorKind::config, path.string() + ": unknown key '" + key + "' in [" + section + "]");
      }
    }
  }

  const auto base = path.parent_path();
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };

  ExperimentConfig c;
  try {
    if (auto v = tree.get_optional<std::string>("data.source")) c.source_dir = resolve(*v);
    if (auto v = tree.get_optional<std::string>("data.target")) c.target_dir = resolve(*v);
    if (auto v = tree.get_optional<std::string>("source.spec")) c.source_spec = resolve(*v);
    c.source_students = tree.get("source.students", c.source_students);
    c.shift.delta_contents = tree.get("shift.delta_contents", c.shift.delta_contents);
    c.shift.delta_quizzes = tree.get("shift.delta_quizzes", c.shift.delta_quizzes);
    c.shift.delta_projects = tree.get("shift.delta_projects", c.shift.delta_projects);
    c.shift.difficulty_multiplier = tree.get("shift.difficulty_multiplier", c.shift.difficulty_multiplier);
    c.shift.pacing_multiplier = tree.get("shift.pacing_multiplier", c.shift.pacing_multiplier);
    if (auto v = tree.get_optional<double>("shift.base_rate")) c.shift.base_rate = *v;
    c.target_students = tree.get("target.students", c.target_students);
    c.embedding_dim = tree.get("model.embedding_dim", c.embedding_dim);
    c.hidden_dim = tree.get("model.hidden_dim", c.hidden_dim);
    c.train.epochs = tree.get("train.epochs", c.train.epochs);
    c.train.batch_size = tree.get("train.batch_size", c.train.batch_size);
    c.train.learning_rate = tree.get("train.learning_rate", c.train.learning_rate);
    c.train.patience = tree.get("train.patience", c.train.patience);
    if (auto v = tree.get_optional<std::string>("train.weeks")) c.train.weeks = parse_int_list(*v);
    c.folds = tree.get("train.folds", c.folds);
    c.validation_fraction = tree.get("train.validation_fraction", c.validation_fraction);
    if (auto v = tree.get_optional<std::string>("adapt.thresholds")) c.adapt.thresholds = parse_double_list(*v);
    c.adapt.epochs = tree.get("adapt.epochs", c.adapt.epochs);
    c.adapt.batch_size = tree.get("adapt.batch_size", c.adapt.batch_size);
    c.adapt.learning_rate = tree.get("adapt.learning_rate", c.adapt.learning_rate);
    c.adapt.selection_fraction = tree.get("adapt.selection_fraction", c.adapt.selection_fraction);
    c.target_folds = tree.get("adapt.folds", c.target_folds);
    c.oracle = tree.get("adapt.oracle", c.oracle);
    c.logreg.l2 = tree.get("baseline.l2", c.logreg.l2);
    c.logreg.epochs = tree.get("baseline.epochs", c.logreg.epochs);
    c.logreg.learning_rate = tree.get("baseline.learning_rate", c.logreg.learning_rate);
    if (auto v = tree.get_optional<std::string>("run.seeds")) {
      c.seeds.clear();
      for (int s : parse_int_list(*v)) {
        if (s < 0) fail(ErrorKind::config, "seeds must be non-negative");
        c.seeds.push_back(static_cast<std::uint64_t>(s));
      }
    }
    c.workers = tree.get("run.workers", c.workers);
    if (auto v = tree.get_optional<std::string>("run.out")) c.out = resolve(*v).lexically_normal();
  } catch (const boost::property_tree::ptree_error& e) {
    fail(ErrorKind::config, path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

}  // namespace gritnet
