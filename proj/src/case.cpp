#include "kuq/case.hpp"

#include <fstream>
#include <map>
#include <set>
#include <vector>

#include <json.hpp>

#include "kuq/common.hpp"

namespace kuq {

using nlohmann::json;

int Case::bus_index(const std::string& id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return static_cast<int>(i);
    return -1;
}

int Case::branch_index(const std::string& id) const {
    for (std::size_t i = 0; i < branches.size(); ++i)
        if (branches[i].id == id) return static_cast<int>(i);
    return -1;
}

void Case::validate() const {
    if (buses.empty()) throw ConfigError("case: buses is empty");
    if (!(system.base_mva > 0.0)) throw ConfigError("case: system.base_MVA must be > 0");
    if (!(system.nominal_freq_hz > 0.0))
        throw ConfigError("case: system.nominal_freq_Hz must be > 0");

    int slack_count = 0;
    std::set<std::string> bus_ids;
    for (const auto& b : buses) {
        if (!bus_ids.insert(b.id).second)
            throw ConfigError("case: duplicate bus id '" + b.id + "'");
        if (b.type == BusType::slack) ++slack_count;
        if (!(b.v_setpoint > 0.0))
            throw ConfigError("case: buses[" + b.id + "].V_setpoint must be > 0");
    }
    if (slack_count != 1)
        throw ConfigError("case: exactly one slack bus required, found " +
                          std::to_string(slack_count));

    std::set<std::string> branch_ids;
    for (const auto& br : branches) {
        if (!branch_ids.insert(br.id).second)
            throw ConfigError("case: duplicate branch id '" + br.id + "'");
        if (bus_index(br.from) < 0)
            throw ConfigError("case: branches[" + br.id + "].from references unknown bus '" +
                              br.from + "'");
        if (bus_index(br.to) < 0)
            throw ConfigError("case: branches[" + br.id + "].to references unknown bus '" +
                              br.to + "'");
        if (br.r < 0.0) throw ConfigError("case: branches[" + br.id + "].r must be >= 0");
        if (!(br.x > 0.0)) throw ConfigError("case: branches[" + br.id + "].x must be > 0");
        if (!(br.tap > 0.0)) throw ConfigError("case: branches[" + br.id + "].tap must be > 0");
    }

    std::set<std::string> gen_ids;
    std::set<std::string> gen_buses;
    for (const auto& g : generators) {
        if (!gen_ids.insert(g.id).second)
            throw ConfigError("case: duplicate generator id '" + g.id + "'");
        int b = bus_index(g.bus);
        if (b < 0)
            throw ConfigError("case: generators[" + g.id + "].bus references unknown bus '" +
                              g.bus + "'");
        if (!gen_buses.insert(g.bus).second)
            throw ConfigError("case: multiple generators at bus '" + g.bus + "'");
        if (buses[b].type == BusType::PQ)
            throw ConfigError("case: generators[" + g.id + "] sits on PQ bus '" + g.bus + "'");
        if (!(g.h > 0.0)) throw ConfigError("case: generators[" + g.id + "].H must be > 0");
        if (!(g.x_d_prime > 0.0))
            throw ConfigError("case: generators[" + g.id + "].x_d_prime must be > 0");
        if (g.d < 0.0) throw ConfigError("case: generators[" + g.id + "].D must be >= 0");
    }
    for (const auto& b : buses) {
        if (b.type != BusType::PQ && gen_buses.find(b.id) == gen_buses.end())
            throw ConfigError("case: " + bus_type_name(b.type) + " bus '" + b.id +
                              "' has no generator");
    }

    // Connectivity over in-service branches.
    const int n = n_buses();
    std::vector<std::vector<int>> adj(n);
    for (const auto& br : branches) {
        if (!br.in_service) continue;
        int a = bus_index(br.from), b = bus_index(br.to);
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int visited = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                ++visited;
                stack.push_back(v);
            }
    }
    if (visited != n)
        throw ConfigError("case: in-service branch graph is disconnected (" +
                          std::to_string(n - visited) + " unreachable buses)");
}

std::string bus_type_name(BusType t) {
    switch (t) {
        case BusType::slack: return "slack";
        case BusType::PV: return "PV";
        case BusType::PQ: return "PQ";
    }
    return "?";
}

namespace {

BusType parse_bus_type(const std::string& s, const std::string& where) {
    if (s == "slack") return BusType::slack;
    if (s == "PV") return BusType::PV;
    if (s == "PQ") return BusType::PQ;
    throw ConfigError("case: " + where + ": unknown bus type '" + s + "'");
}

double get_num(const json& j, const char* key, const std::string& where,
               bool required = true, double fallback = 0.0) {
    if (!j.contains(key)) {
        if (required) throw ConfigError("case: " + where + ": missing field '" + key + "'");
        return fallback;
    }
    if (!j[key].is_number())
        throw ConfigError("case: " + where + "." + key + ": expected a number");
    return j[key].get<double>();
}

std::string get_str(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key))
        throw ConfigError("case: " + where + ": missing field '" + key + "'");
    if (!j[key].is_string())
        throw ConfigError("case: " + where + "." + key + ": expected a string");
    return j[key].get<std::string>();
}

}  // namespace

Case load_case(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_case: cannot open '" + path + "'");

    json root;
    try {
        root = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("load_case: '" + path + "' is not valid JSON: " + e.what());
    }

    for (const char* key : {"system", "buses", "branches", "generators"})
        if (!root.contains(key))
            throw ConfigError("load_case: missing top-level key '" + std::string(key) + "'");

    Case cs;
    const json& sys = root["system"];
    cs.system.base_mva = get_num(sys, "base_MVA", "system");
    cs.system.nominal_freq_hz = get_num(sys, "nominal_freq_Hz", "system");
    if (sys.contains("name")) cs.system.name = sys["name"].get<std::string>();

    for (std::size_t i = 0; i < root["buses"].size(); ++i) {
        const json& jb = root["buses"][i];
        std::string where = "buses[" + std::to_string(i) + "]";
        Bus b;
        b.id = get_str(jb, "id", where);
        b.type = parse_bus_type(get_str(jb, "type", where), where);
        b.p_load = get_num(jb, "P_load", where, false, 0.0);
        b.q_load = get_num(jb, "Q_load", where, false, 0.0);
        b.v_setpoint = get_num(jb, "V_setpoint", where, false, 1.0);
        b.base_kv = get_num(jb, "base_kV", where, false, 0.0);
        cs.buses.push_back(std::move(b));
    }

    for (std::size_t i = 0; i < root["branches"].size(); ++i) {
        const json& jb = root["branches"][i];
        std::string where = "branches[" + std::to_string(i) + "]";
        Branch br;
        br.id = get_str(jb, "id", where);
        br.from = get_str(jb, "from", where);
        br.to = get_str(jb, "to", where);
        br.r = get_num(jb, "r", where);
        br.x = get_num(jb, "x", where);
        br.b_shunt = get_num(jb, "b_shunt", where, false, 0.0);
        br.tap = get_num(jb, "tap", where, false, 1.0);
        br.in_service = jb.value("in_service", true);
        cs.branches.push_back(std::move(br));
    }

    for (std::size_t i = 0; i < root["generators"].size(); ++i) {
        const json& jg = root["generators"][i];
        std::string where = "generators[" + std::to_string(i) + "]";
        Generator g;
        g.id = jg.contains("id") ? get_str(jg, "id", where)
                                 : "G" + std::to_string(i + 1);
        g.bus = get_str(jg, "bus", where);
        g.p_set = get_num(jg, "P_set", where);
        g.x_d_prime = get_num(jg, "x_d_prime", where);
        g.h = get_num(jg, "H", where);
        g.d = get_num(jg, "D", where, false, 0.0);
        cs.generators.push_back(std::move(g));
    }

    cs.validate();
    return cs;
}

}  // namespace kuq
