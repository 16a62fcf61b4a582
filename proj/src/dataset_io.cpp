#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "txgnn/errors.hpp"
#include "txgnn/format.hpp"
#include "txgnn/graph.hpp"

namespace txgnn {

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

std::string row_error(const std::string& path, std::size_t line_no, const std::string& msg) {
    return path + ":" + std::to_string(line_no) + ": " + msg;
}

// Returns the column index of `name` or -1.
int find_column(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

std::int64_t parse_timestamp(const std::string& cell, const std::string& path,
                             std::size_t line_no) {
    try {
        return parse_int(cell, "timestamp");
    } catch (const ParseError& e) {
        throw ParseError(row_error(path, line_no, e.what()));
    }
}

} // namespace

TransactionGraph load_edge_csv(const std::string& path, const DatasetSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open edge file: " + path);

    std::string line;
    if (!read_line(in, line)) throw ParseError(path + ": empty file, header expected");
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "src" || header[1] != "dst" ||
        header[2] != "timestamp")
        throw ParseError(path + ": header must start with src,dst,timestamp");

    const int k_col = find_column(header, "k");
    const int label_col = find_column(header, schema.label_column);

    // Feature columns: everything after timestamp except k and the label,
    // unless the schema pins an explicit list.
    std::vector<int> feature_cols;
    std::vector<std::string> feature_names;
    if (schema.edge_features.empty()) {
        for (std::size_t c = 3; c < header.size(); ++c) {
            if (static_cast<int>(c) == k_col || static_cast<int>(c) == label_col) continue;
            feature_cols.push_back(static_cast<int>(c));
            feature_names.push_back(header[c]);
        }
    } else {
        for (const auto& name : schema.edge_features) {
            const int c = find_column(header, name);
            if (c < 0) throw ParseError(path + ": feature column '" + name + "' not in header");
            feature_cols.push_back(c);
            feature_names.push_back(name);
        }
    }

    TransactionGraph g;
    g.task = schema.task;
    g.edge_dim = static_cast<std::int64_t>(feature_cols.size());
    g.edge_feature_names = feature_names;

    std::unordered_map<std::string, std::int32_t> id_of;
    auto intern = [&](const std::string& ext) {
        auto [it, fresh] = id_of.try_emplace(ext, static_cast<std::int32_t>(g.node_ids.size()));
        if (fresh) g.node_ids.push_back(ext);
        return it->second;
    };

    const bool has_edge_labels = g.task == Task::edge && label_col >= 0;
    std::size_t line_no = 1;
    while (read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(row_error(path, line_no,
                                       "expected " + std::to_string(header.size()) +
                                           " fields, got " + std::to_string(cells.size())));
        Edge e;
        e.src = intern(cells[0]);
        e.dst = intern(cells[1]);
        e.timestamp = static_cast<double>(parse_timestamp(cells[2], path, line_no));
        if (k_col >= 0) {
            const auto k = parse_int(cells[k_col], row_error(path, line_no, "k"));
            if (k < 1)
                throw IntegrityError(row_error(path, line_no, "k must be >= 1, got " +
                                                                  std::to_string(k)));
            e.k = static_cast<std::int32_t>(k);
        }
        for (int c : feature_cols) {
            try {
                g.edge_features.push_back(parse_double(cells[c], header[c]));
            } catch (const ParseError& err) {
                throw ParseError(row_error(path, line_no, err.what()));
            }
        }
        if (has_edge_labels)
            g.labels.push_back(static_cast<std::int32_t>(
                parse_int(cells[label_col], row_error(path, line_no, "label"))));
        g.edges.push_back(e);
    }

    g.node_count = static_cast<std::int64_t>(g.node_ids.size());
    g.has_labels = has_edge_labels;

    // Placeholder node features until a node table is merged.
    g.node_dim = 1;
    g.node_feature_names = {"bias"};
    g.node_features.assign(g.node_count, 1.0);

    return finalize_graph(std::move(g));
}

namespace {

void merge_node_csv(TransactionGraph& g, const std::string& path, const DatasetSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open node file: " + path);

    std::string line;
    if (!read_line(in, line)) throw ParseError(path + ": empty file, header expected");
    const auto header = split_csv_line(line);
    if (header.empty() || header[0] != "node_id")
        throw ParseError(path + ": header must start with node_id");

    const int label_col = find_column(header, schema.label_column);
    std::vector<int> feature_cols;
    std::vector<std::string> feature_names;
    if (schema.node_features.empty()) {
        for (std::size_t c = 1; c < header.size(); ++c) {
            if (static_cast<int>(c) == label_col) continue;
            feature_cols.push_back(static_cast<int>(c));
            feature_names.push_back(header[c]);
        }
    } else {
        for (const auto& name : schema.node_features) {
            const int c = find_column(header, name);
            if (c < 0) throw ParseError(path + ": feature column '" + name + "' not in header");
            feature_cols.push_back(c);
            feature_names.push_back(name);
        }
    }
    const bool want_labels = g.task == Task::node;
    if (want_labels && label_col < 0)
        throw ParseError(path + ": node task requires a '" + schema.label_column + "' column");

    std::unordered_map<std::string, std::int32_t> id_of;
    for (std::size_t i = 0; i < g.node_ids.size(); ++i)
        id_of.emplace(g.node_ids[i], static_cast<std::int32_t>(i));

    const std::int64_t dim = static_cast<std::int64_t>(feature_cols.size());
    std::vector<double> features(g.node_count * dim, 0.0);
    std::vector<std::int32_t> labels(want_labels ? g.node_count : 0, 0);
    std::vector<std::uint8_t> covered(g.node_count, 0);

    std::size_t line_no = 1;
    while (read_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(row_error(path, line_no,
                                       "expected " + std::to_string(header.size()) +
                                           " fields, got " + std::to_string(cells.size())));
        std::int32_t id;
        auto it = id_of.find(cells[0]);
        if (it == id_of.end()) {
            // Isolated node: extend the universe.
            id = static_cast<std::int32_t>(g.node_ids.size());
            id_of.emplace(cells[0], id);
            g.node_ids.push_back(cells[0]);
            g.node_count = static_cast<std::int64_t>(g.node_ids.size());
            g.incident_pairs.emplace_back();
            features.resize(g.node_count * dim, 0.0);
            covered.push_back(0);
            if (want_labels) labels.push_back(0);
        } else {
            id = it->second;
        }
        if (covered[id])
            throw IntegrityError(row_error(path, line_no, "duplicate node_id '" + cells[0] + "'"));
        covered[id] = 1;
        for (std::int64_t f = 0; f < dim; ++f) {
            try {
                features[id * dim + f] = parse_double(cells[feature_cols[f]], header[feature_cols[f]]);
            } catch (const ParseError& err) {
                throw ParseError(row_error(path, line_no, err.what()));
            }
        }
        if (want_labels)
            labels[id] = static_cast<std::int32_t>(
                parse_int(cells[label_col], row_error(path, line_no, "label")));
    }

    for (std::size_t i = 0; i < covered.size(); ++i)
        if (!covered[i])
            throw IntegrityError(path + ": node table is missing endpoint '" + g.node_ids[i] +
                                 "'");

    g.node_dim = dim;
    g.node_features = std::move(features);
    g.node_feature_names = feature_names;
    if (want_labels) {
        g.labels = std::move(labels);
        g.has_labels = true;
    }
    validate_graph(g);
}

std::unordered_map<std::string, std::string> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open manifest: " + path);
    std::unordered_map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (read_line(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(row_error(path, line_no, "expected key=value"));
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::vector<std::string> split_list(const std::string& s) {
    if (s.empty()) return {};
    return split_csv_line(s);
}

} // namespace

TransactionGraph load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto manifest_path = (fs::path(dir) / "manifest.txt").string();
    const auto edges_path = (fs::path(dir) / "edges.csv").string();
    const auto nodes_path = (fs::path(dir) / "nodes.csv").string();

    auto kv = read_manifest(manifest_path);
    static const std::unordered_set<std::string> known{"task", "label_column", "edge_features",
                                                       "node_features"};
    for (const auto& [key, value] : kv)
        if (!known.count(key))
            throw ParseError(manifest_path + ": unknown key '" + key + "'");
    if (!kv.count("task")) throw ParseError(manifest_path + ": missing required key 'task'");

    DatasetSchema schema;
    schema.task = task_from_name(kv.at("task"));
    if (kv.count("label_column")) schema.label_column = kv.at("label_column");
    if (kv.count("edge_features")) schema.edge_features = split_list(kv.at("edge_features"));
    if (kv.count("node_features")) schema.node_features = split_list(kv.at("node_features"));

    auto g = load_edge_csv(edges_path, schema);
    if (fs::exists(nodes_path)) merge_node_csv(g, nodes_path, schema);
    if (schema.task == Task::node && !g.has_labels)
        throw ParseError(dir + ": node task but no node table with labels present");
    return g;
}

void save_dataset(const TransactionGraph& g, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ContractError("cannot create dataset directory " + dir + ": " + ec.message());

    const bool real_node_table =
        g.node_feature_names != std::vector<std::string>{"bias"} || g.task == Task::node;

    {
        std::ofstream out((fs::path(dir) / "manifest.txt").string());
        out << "task=" << task_name(g.task) << "\n";
        out << "label_column=label\n";
        out << "edge_features=";
        for (std::size_t i = 0; i < g.edge_feature_names.size(); ++i)
            out << (i ? "," : "") << g.edge_feature_names[i];
        out << "\n";
        if (real_node_table) {
            out << "node_features=";
            for (std::size_t i = 0; i < g.node_feature_names.size(); ++i)
                out << (i ? "," : "") << g.node_feature_names[i];
            out << "\n";
        }
        if (!out) throw ContractError("failed writing manifest in " + dir);
    }

    {
        std::ofstream out((fs::path(dir) / "edges.csv").string());
        out << "src,dst,timestamp,k";
        for (const auto& name : g.edge_feature_names) out << ',' << name;
        const bool edge_labels = g.task == Task::edge && g.has_labels;
        if (edge_labels) out << ",label";
        out << "\n";
        for (std::size_t e = 0; e < g.edges.size(); ++e) {
            const auto& ed = g.edges[e];
            const auto ts = static_cast<std::int64_t>(ed.timestamp);
            if (static_cast<double>(ts) != ed.timestamp)
                throw ContractError("edge " + std::to_string(e) +
                                    ": non-integer timestamp cannot be serialized");
            out << g.node_ids[ed.src] << ',' << g.node_ids[ed.dst] << ',' << ts << ',' << ed.k;
            for (std::int64_t c = 0; c < g.edge_dim; ++c)
                out << ',' << format_double(g.edge_features[e * g.edge_dim + c]);
            if (edge_labels) out << ',' << g.labels[e];
            out << "\n";
        }
        if (!out) throw ContractError("failed writing edges.csv in " + dir);
    }

    if (real_node_table) {
        std::ofstream out((fs::path(dir) / "nodes.csv").string());
        out << "node_id";
        for (const auto& name : g.node_feature_names) out << ',' << name;
        const bool node_labels = g.task == Task::node && g.has_labels;
        if (node_labels) out << ",label";
        out << "\n";
        for (std::int64_t v = 0; v < g.node_count; ++v) {
            out << g.node_ids[v];
            for (std::int64_t c = 0; c < g.node_dim; ++c)
                out << ',' << format_double(g.node_features[v * g.node_dim + c]);
            if (node_labels) out << ',' << g.labels[v];
            out << "\n";
        }
        if (!out) throw ContractError("failed writing nodes.csv in " + dir);
    }
}

} // namespace txgnn
