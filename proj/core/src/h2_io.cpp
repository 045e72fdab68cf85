#include "h2mmp/h2_io.hpp"

#include <fstream>
#include <json.hpp>

#include "h2mmp/errors.hpp"

namespace h2mmp {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "h2json/1";

template <class Scalar>
json matrix_to_json(const DenseMatrix<Scalar>& m) {
  json data = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if constexpr (is_complex_v<Scalar>) {
        data.push_back(m(r, c).real());
        data.push_back(m(r, c).imag());
      } else {
        data.push_back(m(r, c));
      }
    }
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

template <class Scalar>
DenseMatrix<Scalar> matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw LoadError("malformed matrix record at " + where);
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0) throw LoadError("negative matrix shape at " + where);
  const std::size_t expected =
      static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * (is_complex_v<Scalar> ? 2 : 1);
  if (!data.is_array() || data.size() != expected)
    throw LoadError("matrix data length mismatch at " + where);
  DenseMatrix<Scalar> m(rows, cols);
  std::size_t p = 0;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      if constexpr (is_complex_v<Scalar>) {
        const double re = data[p++].get<double>();
        const double im = data[p++].get<double>();
        m(r, c) = Complex(re, im);
      } else {
        m(r, c) = data[p++].get<double>();
      }
    }
  }
  return m;
}

template <class Scalar>
json basis_to_json(const ClusterBasis<Scalar>& basis, const ClusterTree& tree) {
  json leaf = json::array();
  json transfer = json::array();
  json degenerate = json::array();
  for (const Cluster& c : tree.clusters) {
    if (c.is_leaf())
      leaf.push_back(json{{"cluster", c.id}, {"matrix", matrix_to_json(basis.leaf[c.id])}});
    if (!c.is_leaf() && basis.transfer[c.id].size() > 0)
      transfer.push_back(
          json{{"cluster", c.id}, {"matrix", matrix_to_json(basis.transfer[c.id])}});
    if (basis.degenerate[c.id]) degenerate.push_back(c.id);
  }
  return json{{"leaf", std::move(leaf)}, {"transfer", std::move(transfer)},
              {"degenerate", std::move(degenerate)}};
}

template <class Scalar>
void basis_from_json(const json& j, const ClusterTree& tree, ClusterBasis<Scalar>& basis,
                     const std::string& where) {
  basis.resize(tree.clusters.size());
  for (const auto& entry : j.at("leaf")) {
    const int id = entry.at("cluster").get<int>();
    if (id < 0 || id >= static_cast<int>(tree.clusters.size()) || !tree.clusters[id].is_leaf())
      throw LoadError("bad leaf basis cluster id in " + where);
    basis.leaf[id] = matrix_from_json<Scalar>(entry.at("matrix"), where + ".leaf");
    if (basis.leaf[id].rows() != tree.clusters[id].size())
      throw LoadError("leaf basis row count disagrees with cluster size in " + where);
    basis.rank[id] = basis.leaf[id].cols();
  }
  for (const auto& entry : j.at("transfer")) {
    const int id = entry.at("cluster").get<int>();
    if (id < 0 || id >= static_cast<int>(tree.clusters.size()) || tree.clusters[id].is_leaf())
      throw LoadError("bad transfer cluster id in " + where);
    basis.transfer[id] = matrix_from_json<Scalar>(entry.at("matrix"), where + ".transfer");
    basis.rank[id] = basis.transfer[id].cols();
  }
  for (const auto& entry : j.at("degenerate")) {
    const int id = entry.get<int>();
    if (id < 0 || id >= static_cast<int>(tree.clusters.size()))
      throw LoadError("bad degenerate cluster id in " + where);
    basis.degenerate[id] = 1;
  }
  // transfers must stack the children ranks
  for (const Cluster& c : tree.clusters) {
    if (c.is_leaf() || basis.transfer[c.id].size() == 0) continue;
    if (basis.transfer[c.id].rows() != basis.rank[c.child[0]] + basis.rank[c.child[1]])
      throw LoadError("transfer stack height disagrees with children ranks in " + where);
  }
}

json tree_to_json(const ClusterTree& tree) {
  json clusters = json::array();
  for (const Cluster& c : tree.clusters) {
    json jc{{"id", c.id},     {"parent", c.parent}, {"level", c.level},
            {"begin", c.begin}, {"end", c.end}};
    jc["children"] = c.is_leaf() ? json::array() : json::array({c.child[0], c.child[1]});
    jc["bbox_min"] = {c.bbox_min.x(), c.bbox_min.y(), c.bbox_min.z()};
    jc["bbox_max"] = {c.bbox_max.x(), c.bbox_max.y(), c.bbox_max.z()};
    clusters.push_back(std::move(jc));
  }
  return json{{"depth", tree.depth},
              {"leafsize", tree.leafsize},
              {"permutation", tree.perm},
              {"clusters", std::move(clusters)}};
}

std::shared_ptr<const ClusterTree> tree_from_json(const json& j) {
  ClusterTree tree;
  tree.depth = j.at("depth").get<int>();
  tree.leafsize = j.at("leafsize").get<int>();
  tree.perm = j.at("permutation").get<std::vector<int>>();
  const int n = static_cast<int>(tree.perm.size());
  if (n < 1 || tree.depth < 0) throw LoadError("malformed tree header");
  tree.inv_perm.resize(n);
  std::vector<char> seen(n, 0);
  for (int i = 0; i < n; ++i) {
    const int p = tree.perm[i];
    if (p < 0 || p >= n || seen[p]) throw LoadError("permutation is not a bijection");
    seen[p] = 1;
    tree.inv_perm[p] = i;
  }
  for (const auto& jc : j.at("clusters")) {
    Cluster c;
    c.id = jc.at("id").get<int>();
    c.parent = jc.at("parent").get<int>();
    c.level = jc.at("level").get<int>();
    c.begin = jc.at("begin").get<int>();
    c.end = jc.at("end").get<int>();
    const auto& ch = jc.at("children");
    if (ch.size() == 2) c.child = {ch[0].get<int>(), ch[1].get<int>()};
    for (int a = 0; a < 3; ++a) {
      c.bbox_min[a] = jc.at("bbox_min")[a].get<double>();
      c.bbox_max[a] = jc.at("bbox_max")[a].get<double>();
    }
    if (c.id != static_cast<int>(tree.clusters.size()))
      throw LoadError("cluster ids must be dense and ordered");
    if (c.begin < 0 || c.end > n || c.begin >= c.end) throw LoadError("bad cluster range");
    tree.clusters.push_back(c);
  }
  if (tree.clusters.empty()) throw LoadError("tree has no clusters");
  const int total = static_cast<int>(tree.clusters.size());
  for (const Cluster& c : tree.clusters) {
    if (c.parent >= total || (c.parent < 0 && c.id != 0))
      throw LoadError("bad parent reference in cluster " + std::to_string(c.id));
    if (!c.is_leaf()) {
      for (int ch : c.child) {
        if (ch <= c.id || ch >= total)
          throw LoadError("bad child reference in cluster " + std::to_string(c.id));
        if (tree.clusters[ch].parent != c.id)
          throw LoadError("child/parent mismatch at cluster " + std::to_string(c.id));
      }
      if (tree.clusters[c.child[0]].begin != c.begin ||
          tree.clusters[c.child[1]].end != c.end ||
          tree.clusters[c.child[0]].end != tree.clusters[c.child[1]].begin)
        throw LoadError("children do not partition cluster " + std::to_string(c.id));
    }
  }
  tree.levels.assign(tree.depth + 1, {});
  for (const Cluster& c : tree.clusters) {
    if (c.level < 0 || c.level > tree.depth) throw LoadError("cluster level out of range");
    tree.levels[c.level].push_back(c.id);
  }
  for (auto& level : tree.levels)
    std::sort(level.begin(), level.end(), [&](int a, int b) {
      return tree.clusters[a].begin < tree.clusters[b].begin;
    });
  return std::make_shared<const ClusterTree>(std::move(tree));
}

template <class Scalar>
json blocks_to_json(const std::map<BlockKey, DenseMatrix<Scalar>>& blocks) {
  json out = json::array();
  for (const auto& [key, m] : blocks)
    out.push_back(json{{"row", key.row}, {"col", key.col}, {"matrix", matrix_to_json(m)}});
  return out;
}

constexpr const char* scalar_name(bool complex_kind) { return complex_kind ? "complex" : "real"; }

json parse_document(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw LoadError(std::string("h2json parse failure: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version"))
    throw LoadError("not an h2json document (missing version)");
  if (doc.at("version").get<std::string>() != kVersion)
    throw LoadError("unsupported h2json version: " + doc.at("version").dump());
  return doc;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

template <class Scalar>
std::string h2_to_json(const H2Matrix<Scalar>& h) {
  if (!h.tree || !h.structure) throw ConfigError("h2_to_json: matrix has no structure");
  json doc;
  doc["version"] = kVersion;
  doc["scalar"] = scalar_name(is_complex_v<Scalar>);
  doc["n"] = h.size();
  doc["eta"] = h.structure->eta();
  doc["tree"] = tree_to_json(*h.tree);
  doc["row_basis"] = basis_to_json(h.row_basis, *h.tree);
  doc["col_basis"] = basis_to_json(h.col_basis, *h.tree);
  doc["coupling"] = blocks_to_json(h.coupling);
  doc["full"] = blocks_to_json(h.full);
  return doc.dump();
}

template <class Scalar>
void save_h2(const H2Matrix<Scalar>& h, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << h2_to_json(h);
  if (!out) throw ConfigError("failed writing " + path);
}

ScalarKind h2_file_scalar_kind(const std::string& path) {
  try {
    const json doc = parse_document(read_file(path));
    const std::string kind = doc.at("scalar").get<std::string>();
    if (kind == "real") return ScalarKind::real;
    if (kind == "complex") return ScalarKind::complex;
    throw LoadError("unknown scalar kind: " + kind);
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed h2json document: ") + e.what());
  }
}

template <class Scalar>
H2Matrix<Scalar> h2_from_json_impl(const std::string& text) {
  const json doc = parse_document(text);
  const std::string kind = doc.at("scalar").get<std::string>();
  if (kind != scalar_name(is_complex_v<Scalar>))
    throw LoadError("scalar kind mismatch: file holds " + kind);

  H2Matrix<Scalar> h;
  auto tree = tree_from_json(doc.at("tree"));
  if (doc.at("n").get<int>() != tree->size())
    throw LoadError("matrix size disagrees with the tree");
  h.tree = tree;
  h.structure = build_block_tree(tree, tree, doc.at("eta").get<double>());

  basis_from_json(doc.at("row_basis"), *tree, h.row_basis, "row_basis");
  basis_from_json(doc.at("col_basis"), *tree, h.col_basis, "col_basis");

  for (const auto& entry : doc.at("coupling")) {
    const BlockKey key{entry.at("row").get<int>(), entry.at("col").get<int>()};
    if (h.structure->kind(key.row, key.col) != BlockKind::admissible)
      throw LoadError("coupling stored for a non-admissible block");
    DenseMatrix<Scalar> m = matrix_from_json<Scalar>(entry.at("matrix"), "coupling");
    if (m.rows() != h.row_basis.rank[key.row] || m.cols() != h.col_basis.rank[key.col])
      throw LoadError("coupling shape disagrees with cluster ranks");
    h.coupling[key] = std::move(m);
  }
  for (const auto& entry : doc.at("full")) {
    const BlockKey key{entry.at("row").get<int>(), entry.at("col").get<int>()};
    if (h.structure->kind(key.row, key.col) != BlockKind::inadmissible_leaf)
      throw LoadError("full block stored for a non-inadmissible block");
    DenseMatrix<Scalar> m = matrix_from_json<Scalar>(entry.at("matrix"), "full");
    if (m.rows() != tree->clusters[key.row].size() || m.cols() != tree->clusters[key.col].size())
      throw LoadError("full block shape disagrees with cluster sizes");
    h.full[key] = std::move(m);
  }
  return h;
}

template <class Scalar>
H2Matrix<Scalar> h2_from_json(const std::string& text) {
  try {
    return h2_from_json_impl<Scalar>(text);
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed h2json document: ") + e.what());
  }
}

template <class Scalar>
H2Matrix<Scalar> load_h2(const std::string& path) {
  return h2_from_json<Scalar>(read_file(path));
}

template std::string h2_to_json<Real>(const H2Matrix<Real>&);
template std::string h2_to_json<Complex>(const H2Matrix<Complex>&);
template void save_h2<Real>(const H2Matrix<Real>&, const std::string&);
template void save_h2<Complex>(const H2Matrix<Complex>&, const std::string&);
template H2Matrix<Real> load_h2<Real>(const std::string&);
template H2Matrix<Complex> load_h2<Complex>(const std::string&);
template H2Matrix<Real> h2_from_json<Real>(const std::string&);
template H2Matrix<Complex> h2_from_json<Complex>(const std::string&);

}  // namespace h2mmp
