#pragma once

#include "locmis/tabular.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace locmis {

// JSON document with the keys num_states, num_actions, gamma, initial_state,
// transition (flattened s-a-s') and reward (flattened s-a).

inline nlohmann::json to_json(const TabularMDP& mdp) {
    return nlohmann::json{{"num_states", mdp.num_states()},
                          {"num_actions", mdp.num_actions()},
                          {"gamma", mdp.gamma()},
                          {"initial_state", mdp.initial_state()},
                          {"transition", mdp.transition()},
                          {"reward", mdp.reward()}};
}

inline TabularMDP mdp_from_json(const nlohmann::json& doc) {
    static const char* keys[] = {"num_states", "num_actions", "gamma", "initial_state", "transition", "reward"};
    for (const char* key : keys) require(doc.contains(key), std::string("MDP document is missing '") + key + "'");
    for (auto it = doc.begin(); it != doc.end(); ++it)
        require(std::find_if(std::begin(keys), std::end(keys), [&](const char* k) { return it.key() == k; }) !=
                    std::end(keys),
                "unknown key '" + it.key() + "' in MDP document");
    try {
        return TabularMDP(doc.at("num_states").get<std::size_t>(), doc.at("num_actions").get<std::size_t>(),
                          doc.at("transition").get<numvec>(), doc.at("reward").get<numvec>(),
                          doc.at("gamma").get<double>(), doc.at("initial_state").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed MDP document: ") + e.what());
    }
}

inline std::string serialize_mdp(const TabularMDP& mdp) { return to_json(mdp).dump(2); }

inline TabularMDP parse_mdp(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument(std::string("MDP document is not valid JSON: ") + e.what());
    }
    return mdp_from_json(doc);
}

inline TabularMDP load_mdp(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open MDP file " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_mdp(buffer.str());
}

inline void save_mdp(const TabularMDP& mdp, const std::string& path) {
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write MDP file " + path);
    out << serialize_mdp(mdp) << '\n';
}

} // namespace locmis
