#pragma once

#include <string>
#include <vector>

namespace kuq {

enum class BusType { slack, PV, PQ };

struct Bus {
    std::string id;
    BusType type = BusType::PQ;
    double p_load = 0.0;      // pu on system base
    double q_load = 0.0;      // pu
    double v_setpoint = 1.0;  // pu
    double base_kv = 0.0;
};

struct Branch {
    std::string id;
    std::string from;
    std::string to;
    double r = 0.0;        // pu
    double x = 0.0;        // pu
    double b_shunt = 0.0;  // total line charging, pu
    double tap = 1.0;      // off-nominal turns ratio on the from side
    bool in_service = true;
};

struct Generator {
    std::string id;
    std::string bus;
    double p_set = 0.0;      // pu
    double x_d_prime = 0.0;  // pu transient reactance
    double h = 0.0;          // inertia constant, s, on system base
    double d = 0.0;          // damping, pu
};

struct SystemData {
    double base_mva = 100.0;
    double nominal_freq_hz = 60.0;
    std::string name;
};

struct Case {
    SystemData system;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;

    int bus_index(const std::string& id) const;      // -1 if absent
    int branch_index(const std::string& id) const;   // -1 if absent
    int n_buses() const { return static_cast<int>(buses.size()); }
    int n_gens() const { return static_cast<int>(generators.size()); }

    // Checks the structural invariants: one slack, ids unique, generator
    // buses exist, positive reactances/inertias, connected in-service graph.
    void validate() const;
};

// Parses the JSON case schema and validates. Throws IoError for unreadable
// files, ConfigError (with a field path) for schema or invariant violations.
Case load_case(const std::string& path);

std::string bus_type_name(BusType t);

}  // namespace kuq
