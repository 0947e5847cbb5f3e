#pragma once

// File formats for graphs and node attributes.
//
//   edge list   header "n=<count>", then one "i j w" per line (0-based);
//               weights round-trip bit-exactly via max-precision decimal.
//   coords CSV  "id,lat,lon"
//   labels CSV  "id,label"
//   features CSV "id,f1,...,fk"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "rewirelab/graph.hpp"

namespace rewirelab {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string edge_list_to_string(const Graph& g) {
    std::ostringstream os;
    os << "n=" << g.n << "\n";
    for (const Edge& e : g.edges) os << e.i << " " << e.j << " " << format_double(e.w) << "\n";
    return os.str();
}

inline Graph edge_list_from_string(const std::string& text) {
    std::istringstream is(text);
    std::string header;
    if (!std::getline(is, header) || header.rfind("n=", 0) != 0)
        throw std::invalid_argument("edge list: missing 'n=<count>' header");
    Graph g;
    g.n = std::stoi(header.substr(2));
    std::string line;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        Edge e;
        if (!(ls >> e.i >> e.j >> e.w))
            throw std::invalid_argument("edge list: malformed line " + std::to_string(lineno) + ": '" + line + "'");
        g.edges.push_back(e);
    }
    g.validate();
    return g;
}

inline void save_edge_list(const Graph& g, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << edge_list_to_string(g);
}

inline Graph load_edge_list(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return edge_list_from_string(ss.str());
}

inline void save_coords_csv(const std::vector<Coord>& coords, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "id,lat,lon\n";
    for (std::size_t i = 0; i < coords.size(); ++i)
        f << i << "," << format_double(coords[i].lat) << "," << format_double(coords[i].lon) << "\n";
}

inline std::vector<Coord> load_coords_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::invalid_argument(path + ": empty coordinate file");
    std::vector<Coord> out;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id, lat, lon;
        if (!std::getline(ls, id, ',') || !std::getline(ls, lat, ',') || !std::getline(ls, lon, ','))
            throw std::invalid_argument(path + ": malformed row " + std::to_string(lineno));
        std::size_t idx = std::stoul(id);
        if (out.size() <= idx) out.resize(idx + 1);
        out[idx] = Coord{std::stod(lat), std::stod(lon)};
    }
    return out;
}

inline void save_labels_csv(const std::vector<int>& labels, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "id,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i) f << i << "," << labels[i] << "\n";
}

inline std::vector<int> load_labels_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    std::getline(f, line);
    std::vector<int> out;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id, lab;
        if (!std::getline(ls, id, ',') || !std::getline(ls, lab, ','))
            throw std::invalid_argument(path + ": malformed row " + std::to_string(lineno));
        std::size_t idx = std::stoul(id);
        if (out.size() <= idx) out.resize(idx + 1, -1);
        out[idx] = std::stoi(lab);
    }
    return out;
}

inline void save_features_csv(const std::vector<std::vector<double>>& feats, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "id";
    std::size_t k = feats.empty() ? 0 : feats[0].size();
    for (std::size_t j = 0; j < k; ++j) f << ",f" << (j + 1);
    f << "\n";
    for (std::size_t i = 0; i < feats.size(); ++i) {
        f << i;
        for (double v : feats[i]) f << "," << format_double(v);
        f << "\n";
    }
}

inline std::vector<std::vector<double>> load_features_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    std::getline(f, line);
    std::vector<std::vector<double>> out;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        if (!std::getline(ls, cell, ','))
            throw std::invalid_argument(path + ": malformed row " + std::to_string(lineno));
        std::size_t idx = std::stoul(cell);
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (out.size() <= idx) out.resize(idx + 1);
        out[idx] = std::move(row);
    }
    return out;
}

}  // namespace rewirelab
