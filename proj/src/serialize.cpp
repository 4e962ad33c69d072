#include "denstree/serialize.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "denstree/error.hpp"

namespace denstree {

using nlohmann::json;

namespace {

json variable_json(const Variable& v) {
  json j;
  j["name"] = v.name;
  if (v.is_discrete()) {
    j["kind"] = "discrete";
    j["arity"] = v.arity;
    if (!v.labels.empty()) j["labels"] = v.labels;
  } else {
    j["kind"] = "continuous";
    j["lo"] = v.lo;
    j["hi"] = v.hi;
  }
  return j;
}

Variable variable_from(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  const auto name = j.at("name").get<std::string>();
  if (kind == "discrete") {
    std::vector<std::string> labels;
    if (j.contains("labels")) labels = j.at("labels").get<std::vector<std::string>>();
    return Variable::discrete(name, j.at("arity").get<int>(), std::move(labels));
  }
  if (kind == "continuous") return Variable::continuous(name, j.at("lo").get<double>(), j.at("hi").get<double>());
  throw ParseError("unknown variable kind '" + kind + "'");
}

json schema_json(const Schema& schema) {
  json vars = json::array();
  for (const auto& v : schema.variables()) vars.push_back(variable_json(v));
  return json{{"variables", vars}};
}

Schema schema_from(const json& j) {
  std::vector<Variable> vars;
  for (const auto& v : j.at("variables")) vars.push_back(variable_from(v));
  return Schema(std::move(vars));
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  auto [end, ec] = std::to_chars(buf, buf + 16, h, 16);
  std::string s(buf, end);
  return std::string(16 - s.size(), '0') + s;
}

json box_json(const Box& box) {
  json out = json::array();
  for (const auto& d : box.dims) {
    if (!d.values.empty()) out.push_back(json{{"values", d.values}});
    else out.push_back(json{{"lo", d.lo}, {"hi", d.hi}, {"open", d.lo_open}});
  }
  return out;
}

Box box_from(const json& j) {
  Box b;
  for (const auto& d : j) {
    DimRange r;
    if (d.contains("values")) {
      r.values = d.at("values").get<std::vector<int>>();
    } else {
      r.lo = d.at("lo").get<double>();
      r.hi = d.at("hi").get<double>();
      r.lo_open = d.at("open").get<bool>();
    }
    b.dims.push_back(std::move(r));
  }
  return b;
}

struct DensityToJson {
  json operator()(const UniformBox&) const { return {{"type", "uniform"}}; }
  json operator()(const DiagGaussian& g) const {
    return {{"type", "gaussian"}, {"mean", g.mean}, {"variance", g.variance}};
  }
  json operator()(const LinRegGaussian& g) const {
    return {{"type", "linreg"},     {"child", g.child},         {"regressors", g.regressors}, {"coef", g.coef},
            {"intercept", g.intercept}, {"variance", g.variance}, {"fallback", g.fallback}};
  }
  json operator()(const LinearInterp& g) const { return {{"type", "ili"}, {"weights", g.weights}}; }
  json operator()(const MultilinearInterp& g) const { return {{"type", "mli"}, {"weights", g.weights}}; }
};

ContinuousDensity density_from(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "uniform") return UniformBox{};
  if (type == "gaussian") return DiagGaussian{j.at("mean").get<std::vector<double>>(), j.at("variance").get<std::vector<double>>()};
  if (type == "linreg") {
    LinRegGaussian g;
    g.child = j.at("child").get<int>();
    g.regressors = j.at("regressors").get<std::vector<int>>();
    g.coef = j.at("coef").get<std::vector<double>>();
    g.intercept = j.at("intercept").get<double>();
    g.variance = j.at("variance").get<double>();
    g.fallback = j.at("fallback").get<bool>();
    return g;
  }
  if (type == "ili") return LinearInterp{j.at("weights").get<std::vector<std::array<double, 2>>>()};
  if (type == "mli") return MultilinearInterp{j.at("weights").get<std::vector<double>>()};
  throw ParseError("unknown leaf density type '" + type + "'");
}

json leaf_json(const Leaf& leaf) {
  json disc = json::array();
  for (const auto& m : leaf.dist.discrete) disc.push_back(json{{"dim", m.dim}, {"prob", m.prob}});
  return {{"id", leaf.id},
          {"mass", leaf.mass},
          {"count", leaf.count},
          {"box", box_json(leaf.box)},
          {"discrete", disc},
          {"continuous_dims", leaf.dist.continuous_dims},
          {"density", std::visit(DensityToJson{}, leaf.dist.density)}};
}

Leaf leaf_from(const json& j) {
  Leaf l;
  l.id = j.at("id").get<int>();
  l.mass = j.at("mass").get<double>();
  l.count = j.at("count").get<std::size_t>();
  l.box = box_from(j.at("box"));
  for (const auto& m : j.at("discrete")) l.dist.discrete.push_back({m.at("dim").get<int>(), m.at("prob").get<std::vector<double>>()});
  l.dist.continuous_dims = j.at("continuous_dims").get<std::vector<int>>();
  l.dist.density = density_from(j.at("density"));
  return l;
}

void branch_json(json& out, Node::Kind kind, int var, double split, const std::vector<int>& values) {
  out["var"] = var;
  if (kind == Node::Kind::continuous_branch) out["split"] = split;
  else out["values"] = values;
}

Node::Kind branch_kind(const json& j) {
  return j.contains("split") ? Node::Kind::continuous_branch : Node::Kind::discrete_branch;
}

json node_json(const Node& n) {
  if (n.is_leaf()) return json{{"leaf", leaf_json(n.leaf)}};
  json out;
  branch_json(out, n.kind, n.var, n.split, n.values);
  json kids = json::array();
  for (const auto& c : n.children) kids.push_back(node_json(c));
  out["children"] = std::move(kids);
  return out;
}

Node node_from(const json& j) {
  Node n;
  if (j.contains("leaf")) {
    n.leaf = leaf_from(j.at("leaf"));
    return n;
  }
  n.kind = branch_kind(j);
  n.var = j.at("var").get<int>();
  if (n.kind == Node::Kind::continuous_branch) n.split = j.at("split").get<double>();
  else n.values = j.at("values").get<std::vector<int>>();
  for (const auto& c : j.at("children")) n.children.push_back(node_from(c));
  if (n.children.empty()) throw ParseError("branch node without children");
  return n;
}

json aux_json(const AuxNode& n) {
  json out{{"box", box_json(n.box)}, {"subtree", n.subtree}};
  if (n.is_leaf()) {
    out["target"] = n.target;
    out["alpha"] = n.alpha;
    out["leaf_ids"] = n.leaf_ids;
    return out;
  }
  branch_json(out, n.kind, n.var, n.split, n.values);
  json kids = json::array();
  for (const auto& c : n.children) kids.push_back(aux_json(c));
  out["children"] = std::move(kids);
  return out;
}

AuxNode aux_from(const json& j) {
  AuxNode n;
  n.box = box_from(j.at("box"));
  n.subtree = j.at("subtree").get<int>();
  if (!j.contains("children")) {
    n.target = j.at("target").get<int>();
    n.alpha = j.at("alpha").get<double>();
    n.leaf_ids = j.at("leaf_ids").get<std::vector<int>>();
    return n;
  }
  n.kind = branch_kind(j);
  n.var = j.at("var").get<int>();
  if (n.kind == Node::Kind::continuous_branch) n.split = j.at("split").get<double>();
  else n.values = j.at("values").get<std::vector<int>>();
  for (const auto& c : j.at("children")) n.children.push_back(aux_from(c));
  return n;
}

json conditional_json(const ConditionalModel& m) {
  const DensityTree& t = *m.tree;
  json space = json::array();
  for (const auto& v : t.space) space.push_back(variable_json(v));
  json out{{"child", m.spec.child},
           {"parents", m.spec.parents},
           {"mode", std::string(to_string(m.mode))},
           {"leaf_family", std::string(to_string(m.leaf))},
           {"epsilon", m.epsilon},
           {"space", space},
           {"modeled", t.modeled},
           {"tree_epsilon", t.epsilon},
           {"root_box", box_json(t.root_box)},
           {"leaf_count", t.leaf_count},
           {"root", node_json(t.root)}};
  if (m.aux) {
    out["aux"] = json{{"leaf_count", m.aux->leaf_count},
                      {"subtree_count", m.aux->subtree_count},
                      {"subtree_fallback", m.aux->subtree_fallback},
                      {"root", aux_json(m.aux->root)}};
  }
  return out;
}

ConditionalModel conditional_from(const json& j) {
  ConditionalSpec spec{j.at("child").get<int>(), j.at("parents").get<std::vector<int>>()};
  const auto mode = parse_conditional_mode(j.at("mode").get<std::string>());
  const auto leaf = parse_leaf_family(j.at("leaf_family").get<std::string>());
  if (!mode || !leaf) throw ParseError("unknown mode or leaf family");
  DensityTree t;
  for (const auto& v : j.at("space")) t.space.push_back(variable_from(v));
  t.modeled = j.at("modeled").get<std::vector<bool>>();
  t.epsilon = j.at("tree_epsilon").get<double>();
  t.root_box = box_from(j.at("root_box"));
  t.leaf_count = j.at("leaf_count").get<std::size_t>();
  t.root = node_from(j.at("root"));
  if (t.space.size() != spec.parents.size() + 1 || t.modeled.size() != t.space.size() ||
      t.root_box.size() != t.space.size())
    throw ParseError("conditional dimensions disagree");
  std::optional<AuxTree> aux;
  if (j.contains("aux")) {
    const auto& a = j.at("aux");
    AuxTree at;
    at.leaf_count = a.at("leaf_count").get<std::size_t>();
    at.subtree_count = a.at("subtree_count").get<std::size_t>();
    at.subtree_fallback = a.at("subtree_fallback").get<std::vector<bool>>();
    at.root = aux_from(a.at("root"));
    aux = std::move(at);
  }
  const double eps = j.at("epsilon").get<double>();
  auto model = make_model(std::move(spec), *mode, *leaf, eps, std::move(t), std::move(aux));
  for (std::size_t i = 0; i < model.leaves.size(); ++i)
    if (!model.leaves[i] || model.leaves[i]->id != static_cast<int>(i)) throw ParseError("leaf ids are not contiguous");
  return model;
}

json envelope(const Schema& schema, std::string_view kind) {
  return json{{"format", "denstree-model"},
              {"version", kModelFormatVersion},
              {"kind", kind},
              {"schema", schema_json(schema)},
              {"schema_hash", hash_hex(schema_hash(schema))}};
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

std::string encode_schema(const Schema& schema) { return schema_json(schema).dump(2) + "\n"; }

Schema decode_schema(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("schema: ") + e.what(), e.byte);
  }
  try {
    return schema_from(j);
  } catch (const json::exception& e) {
    throw ParseError(std::string("schema: ") + e.what());
  }
}

std::uint64_t schema_hash(const Schema& schema) {
  const std::string text = schema_json(schema).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string encode_model(const ConditionalModel& model, const Schema& schema) {
  json j = envelope(schema, "conditional");
  j["conditional"] = conditional_json(model);
  return j.dump() + "\n";
}

std::string encode_model(const FactoredModel& model) {
  json j = envelope(*model.schema, "network");
  j["parents"] = model.structure.parents;
  json conds = json::array();
  for (const auto& c : model.conditionals) conds.push_back(conditional_json(c));
  j["conditionals"] = std::move(conds);
  return j.dump() + "\n";
}

ModelFile decode_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model: ") + e.what(), e.byte);
  }
  try {
    if (j.at("format").get<std::string>() != "denstree-model") throw ParseError("not a denstree model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw UnsupportedVersion("unsupported model format version " + std::to_string(version) + " (expected " +
                               std::to_string(kModelFormatVersion) + ")");
    auto schema = std::make_shared<const Schema>(schema_from(j.at("schema")));
    if (j.at("schema_hash").get<std::string>() != hash_hex(schema_hash(*schema)))
      throw ParseError("schema hash mismatch");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "conditional") return {schema, conditional_from(j.at("conditional"))};
    if (kind != "network") throw ParseError("unknown model kind '" + kind + "'");
    FactoredModel fm;
    fm.schema = schema;
    fm.structure.parents = j.at("parents").get<std::vector<std::vector<int>>>();
    for (const auto& c : j.at("conditionals")) fm.conditionals.push_back(conditional_from(c));
    if (fm.structure.size() != schema->size() || fm.conditionals.size() != schema->size())
      throw ParseError("network size does not match the schema");
    if (!fm.structure.acyclic()) throw ParseError("network structure has a cycle");
    return {schema, std::move(fm)};
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace denstree
