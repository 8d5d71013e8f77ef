#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "gridw/network.hpp"

namespace gridw {

/// Parses the schema-1 network document:
///   {"schema":1, "nodes":[{"id","p"}], "links":[{"id","tail","head","w","wl","wu","cl","cu"}]}
/// An optional top-level "source" string is tolerated and preserved on save.
inline Network network_from_json(const nlohmann::ordered_json& doc) {
  if (!doc.contains("schema") || doc["schema"] != 1)
    throw ValidationError("schema: expected \"schema\": 1");
  if (!doc.contains("nodes") || !doc.contains("links"))
    throw ValidationError("schema: missing nodes/links");

  std::vector<std::string> ids;
  std::vector<double> p;
  for (const auto& nd : doc["nodes"]) {
    ids.push_back(nd.at("id").get<std::string>());
    p.push_back(nd.at("p").get<double>());
  }
  std::map<std::string, int> index;
  for (int i = 0; i < static_cast<int>(ids.size()); ++i) {
    if (index.count(ids[i])) throw ValidationError("duplicate node id: " + ids[i]);
    index[ids[i]] = i;
  }

  std::vector<Link> links;
  int m = static_cast<int>(doc["links"].size());
  Vec w(m), wl(m), wu(m), cl(m), cu(m);
  int i = 0;
  for (const auto& ld : doc["links"]) {
    Link l;
    l.id = ld.at("id").get<std::string>();
    auto t = index.find(ld.at("tail").get<std::string>());
    auto h = index.find(ld.at("head").get<std::string>());
    if (t == index.end() || h == index.end())
      throw ValidationError("link endpoint references unknown node: " + l.id);
    l.tail = t->second;
    l.head = h->second;
    links.push_back(l);
    w(i) = ld.at("w").get<double>();
    wl(i) = ld.at("wl").get<double>();
    wu(i) = ld.at("wu").get<double>();
    cl(i) = ld.at("cl").get<double>();
    cu(i) = ld.at("cu").get<double>();
    ++i;
  }

  Vec pv = Eigen::Map<Vec>(p.data(), static_cast<int>(p.size()));
  return Network(std::move(ids), std::move(links), std::move(w), std::move(wl),
                 std::move(wu), std::move(cl), std::move(cu), std::move(pv));
}

inline nlohmann::ordered_json network_to_json(const Network& net,
                                              const std::string& source = "") {
  nlohmann::ordered_json doc;
  doc["schema"] = 1;
  if (!source.empty()) doc["source"] = source;
  doc["nodes"] = nlohmann::ordered_json::array();
  for (int v = 0; v < net.num_nodes(); ++v)
    doc["nodes"].push_back({{"id", net.node_ids()[v]}, {"p", net.p()(v)}});
  doc["links"] = nlohmann::ordered_json::array();
  for (int i = 0; i < net.num_links(); ++i) {
    const Link& l = net.link(i);
    doc["links"].push_back({{"id", l.id},
                            {"tail", net.node_ids()[l.tail]},
                            {"head", net.node_ids()[l.head]},
                            {"w", net.w()(i)},
                            {"wl", net.wl()(i)},
                            {"wu", net.wu()(i)},
                            {"cl", net.cl()(i)},
                            {"cu", net.cu()(i)}});
  }
  return doc;
}

inline Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  nlohmann::ordered_json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("schema: invalid JSON: ") + e.what());
  }
  return network_from_json(doc);
}

inline void save_network(const Network& net, const std::string& path,
                         const std::string& source = "") {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << network_to_json(net, source).dump(2) << "\n";
}

/// CSV with one `link_id,flow` row per link.
inline std::string flows_to_csv(const Network& net, const Vec& f) {
  std::ostringstream os;
  os << "link_id,flow\n";
  os.precision(17);
  for (int i = 0; i < net.num_links(); ++i) os << net.link(i).id << "," << f(i) << "\n";
  return os.str();
}

}  // namespace gridw
