/**
 * Copyright 2026 The oppnet Authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "oppnet/harness.hpp"

namespace oppnet::harness {

namespace {

void check_keys(const YAML::Node& node, const std::set<std::string>& allowed, const std::string& where) {
  if (!node.IsMap()) throw ConfigError(where + " must be a mapping");
  for (const auto& kv : node) {
    auto key = kv.first.as<std::string>();
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get(const YAML::Node& node, const std::string& key, const std::string& where) {
  try {
    return node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + key + "' in " + where);
  }
}

template <typename T>
void read_opt(const YAML::Node& node, const std::string& key, T& out, const std::string& where) {
  if (node[key]) out = get<T>(node, key, where);
}

std::uint16_t read_address(const YAML::Node& node, const std::string& key, const std::string& where) {
  auto text = get<std::string>(node, key, where);
  try {
    std::size_t used = 0;
    auto v = std::stoul(text, &used, 0);
    if (used != text.size() || v > 0xFFFF) throw std::out_of_range("address");
    return static_cast<std::uint16_t>(v);
  } catch (const std::logic_error&) {
    throw ConfigError("bad address '" + text + "' in " + where);
  }
}

void read_link_params(const YAML::Node& n, sim::LinkModel& m, const std::string& where) {
  read_opt(n, "base_latency_ms", m.base_latency_ms, where);
  read_opt(n, "jitter_ms", m.jitter_ms, where);
  read_opt(n, "loss_p", m.loss_p, where);
  read_opt(n, "max_range_m", m.max_range_m, where);
}

}  // namespace

const NodeSpec& ScenarioConfig::node(const std::string& node_name) const {
  auto it = std::find_if(nodes.begin(), nodes.end(), [&](const NodeSpec& n) { return n.name == node_name; });
  if (it == nodes.end()) throw ConfigError("unknown node '" + node_name + "'");
  return *it;
}

void ScenarioConfig::validate() const {
  if (packet_count == 0) throw ConfigError("packet_count must be positive");
  if (!(send_interval_s > 0.0) || !std::isfinite(send_interval_s)) throw ConfigError("send_interval_s must be > 0");
  if (keep_alive_s < 0.0 || !std::isfinite(keep_alive_s)) throw ConfigError("keep_alive_s must be >= 0");
  if (message_size_bytes < 4) throw ConfigError("message_size_bytes must be at least 4");
  if (topic.empty()) throw ConfigError("topic must not be empty");
  if (serial_baud == 0) throw ConfigError("serial_baud must be positive");
  try {
    mesh.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("mesh: ") + e.what());
  }
  if (bridge.inter_segment_delay < Duration::zero()) throw ConfigError("bridge delay must be >= 0");

  std::set<std::string> names;
  std::set<std::uint16_t> addresses;
  for (const auto& n : nodes) {
    if (n.name.empty()) throw ConfigError("node without a name");
    if (!names.insert(n.name).second) throw ConfigError("duplicate node '" + n.name + "'");
    if (!mesh::MeshAddress(n.unicast).is_unicast()) throw ConfigError("node '" + n.name + "' needs a unicast address");
    if (!addresses.insert(n.unicast).second) throw ConfigError("duplicate unicast address on '" + n.name + "'");
    for (auto g : n.groups) {
      if (!mesh::MeshAddress(g).is_group()) throw ConfigError("node '" + n.name + "' has a non-group address");
    }
  }
  if (!names.contains(sender)) throw ConfigError("sender '" + sender + "' is not a node");
  if (!names.contains(receiver)) throw ConfigError("receiver '" + receiver + "' is not a node");
  if (sender == receiver) throw ConfigError("sender and receiver must differ");
  for (const auto& l : links) {
    if (!names.contains(l.a) || !names.contains(l.b)) throw ConfigError("link references an unknown node");
    if (l.a == l.b) throw ConfigError("link from a node to itself");
    try {
      l.model.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("link: ") + e.what());
    }
  }
  for (const auto& c : churn) {
    if (!names.contains(c.node)) throw ConfigError("churn references unknown node '" + c.node + "'");
    if (c.leave_s && c.join_s && *c.join_s <= *c.leave_s) throw ConfigError("churn join must follow leave");
    if ((c.leave_s && *c.leave_s < 0) || (c.join_s && *c.join_s < 0)) throw ConfigError("churn times must be >= 0");
  }
}

void ScenarioConfig::select_position(const std::string& pos_name) {
  auto it = std::find_if(positions.begin(), positions.end(), [&](const PositionSpec& p) { return p.name == pos_name; });
  if (it == positions.end()) throw ConfigError("unknown position '" + pos_name + "'");
  if (it->receiver_at) {
    for (auto& n : nodes) {
      if (n.name == receiver) n.position = *it->receiver_at;
    }
  }
  auto link = std::find_if(links.begin(), links.end(), [&](const LinkSpec& l) {
    return (l.a == sender && l.b == receiver) || (l.a == receiver && l.b == sender);
  });
  if (link == links.end()) {
    links.push_back({sender, receiver, {}});
    link = std::prev(links.end());
  }
  link->model.base_latency_ms = it->base_latency_ms;
  link->model.jitter_ms = it->jitter_ms;
  link->model.loss_p = it->loss_p;
  position = pos_name;
}

ScenarioConfig parse_scenario(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("scenario is not valid YAML: ") + e.what());
  }
  const std::string top = "scenario";
  check_keys(root,
             {"name", "seed", "packet_count", "send_interval_s", "keep_alive_s", "message_size_bytes", "topic",
              "strict_floodsub", "serial_baud", "sender", "receiver", "mesh", "bridge", "nodes", "links",
              "positions", "position", "churn"},
             top);

  ScenarioConfig c;
  read_opt(root, "name", c.name, top);
  read_opt(root, "seed", c.seed, top);
  read_opt(root, "packet_count", c.packet_count, top);
  read_opt(root, "send_interval_s", c.send_interval_s, top);
  read_opt(root, "keep_alive_s", c.keep_alive_s, top);
  read_opt(root, "message_size_bytes", c.message_size_bytes, top);
  read_opt(root, "topic", c.topic, top);
  read_opt(root, "strict_floodsub", c.strict_floodsub, top);
  read_opt(root, "serial_baud", c.serial_baud, top);
  c.sender = get<std::string>(root, "sender", top);
  c.receiver = get<std::string>(root, "receiver", top);

  if (auto m = root["mesh"]) {
    check_keys(m,
               {"t_count", "t_int_ms", "tx_seg_int_step", "rx_seg_int_step", "retries_unicast", "retries_multicast",
                "relay", "ttl"},
               "mesh");
    read_opt(m, "t_count", c.mesh.t_count, "mesh");
    read_opt(m, "t_int_ms", c.mesh.t_int_ms, "mesh");
    read_opt(m, "tx_seg_int_step", c.mesh.tx_seg_int_step, "mesh");
    read_opt(m, "rx_seg_int_step", c.mesh.rx_seg_int_step, "mesh");
    read_opt(m, "retries_unicast", c.mesh.retries_unicast, "mesh");
    read_opt(m, "retries_multicast", c.mesh.retries_multicast, "mesh");
    read_opt(m, "relay", c.mesh.relay, "mesh");
    read_opt(m, "ttl", c.mesh.ttl, "mesh");
  }
  if (auto b = root["bridge"]) {
    check_keys(b, {"inter_segment_delay_ms", "reassembly_timeout_s"}, "bridge");
    if (b["inter_segment_delay_ms"]) {
      c.bridge.inter_segment_delay = from_ms(get<double>(b, "inter_segment_delay_ms", "bridge"));
    }
    if (b["reassembly_timeout_s"]) {
      c.bridge.reassembly_timeout = from_ms(1000.0 * get<double>(b, "reassembly_timeout_s", "bridge"));
    }
  }

  auto nodes = root["nodes"];
  if (!nodes || !nodes.IsSequence()) throw ConfigError("scenario needs a 'nodes' list");
  for (const auto& n : nodes) {
    check_keys(n, {"name", "x", "y", "unicast", "groups"}, "node");
    NodeSpec spec;
    spec.name = get<std::string>(n, "name", "node");
    read_opt(n, "x", spec.position.x, "node " + spec.name);
    read_opt(n, "y", spec.position.y, "node " + spec.name);
    spec.unicast = read_address(n, "unicast", "node " + spec.name);
    if (auto g = n["groups"]) {
      if (!g.IsSequence()) throw ConfigError("groups of '" + spec.name + "' must be a list");
      spec.groups.clear();
      for (std::size_t i = 0; i < g.size(); ++i) {
        YAML::Node wrap;
        wrap["g"] = g[i];
        spec.groups.push_back(read_address(wrap, "g", "node " + spec.name));
      }
    }
    c.nodes.push_back(std::move(spec));
  }

  if (auto links = root["links"]) {
    if (!links.IsSequence()) throw ConfigError("'links' must be a list");
    for (const auto& l : links) {
      check_keys(l, {"between", "base_latency_ms", "jitter_ms", "loss_p", "max_range_m"}, "link");
      auto ends = get<std::vector<std::string>>(l, "between", "link");
      if (ends.size() != 2) throw ConfigError("'between' needs exactly two nodes");
      LinkSpec spec{ends[0], ends[1], {}};
      read_link_params(l, spec.model, "link");
      c.links.push_back(std::move(spec));
    }
  }

  if (auto positions = root["positions"]) {
    if (!positions.IsSequence()) throw ConfigError("'positions' must be a list");
    for (const auto& p : positions) {
      check_keys(p, {"name", "receiver_x", "receiver_y", "base_latency_ms", "jitter_ms", "loss_p"}, "position");
      PositionSpec spec;
      spec.name = get<std::string>(p, "name", "position");
      if (p["receiver_x"] || p["receiver_y"]) {
        sim::Position at;
        read_opt(p, "receiver_x", at.x, "position " + spec.name);
        read_opt(p, "receiver_y", at.y, "position " + spec.name);
        spec.receiver_at = at;
      }
      read_opt(p, "base_latency_ms", spec.base_latency_ms, "position " + spec.name);
      read_opt(p, "jitter_ms", spec.jitter_ms, "position " + spec.name);
      read_opt(p, "loss_p", spec.loss_p, "position " + spec.name);
      c.positions.push_back(std::move(spec));
    }
  }

  if (auto churn = root["churn"]) {
    if (!churn.IsSequence()) throw ConfigError("'churn' must be a list");
    for (const auto& ch : churn) {
      check_keys(ch, {"node", "leave_s", "join_s"}, "churn");
      ChurnSpec spec;
      spec.node = get<std::string>(ch, "node", "churn");
      if (ch["leave_s"]) spec.leave_s = get<double>(ch, "leave_s", "churn");
      if (ch["join_s"]) spec.join_s = get<double>(ch, "join_s", "churn");
      c.churn.push_back(std::move(spec));
    }
  }

  if (root["position"]) {
    auto name = get<std::string>(root, "position", top);
    c.select_position(name);
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read scenario file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str());
}

}  // namespace oppnet::harness
