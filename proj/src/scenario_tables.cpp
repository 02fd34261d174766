#include "ruta/scenario.hpp"

#include "ruta/error.hpp"

#include <iomanip>
#include <sstream>

namespace ruta::scenario {

using nlohmann::json;

namespace {

struct Column {
    const char* name;
    const char* header;
};

std::vector<Column> columns(Table t) {
    switch (t) {
    case Table::Routes:
        return {{"key", "Key"}, {"site_id", "SiteID"}, {"system_name", "SystemName"}, {"policy_tag", "PolicyTag"}};
    case Table::Linkstate:
        return {{"src", "Source"},       {"dst", "Destination"}, {"status", "Status"},
                {"two_way_delay_us", "TwoWayDelay(us)"}, {"jitter_us", "Jitter(us)"}, {"loss", "Loss"}};
    case Table::Nodes:
        return {{"role", "Role"}, {"system_name", "SystemName"}, {"site_id", "SiteID"}, {"label", "Label"}};
    case Table::Services:
        return {{"role", "Role"}, {"system_name", "SystemName"}, {"slocs", "SLoCs"}};
    }
    return {};
}

std::string cell(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_float()) {
        std::ostringstream o;
        o << std::setprecision(10) << v.get<double>();
        return o.str();
    }
    return v.dump();
}

} // namespace

std::optional<Table> table_from_string(std::string_view s) {
    if (s == "routes") return Table::Routes;
    if (s == "linkstate") return Table::Linkstate;
    if (s == "nodes") return Table::Nodes;
    if (s == "services") return Table::Services;
    return std::nullopt;
}

json dump_table(const std::vector<kv::KvEntry>& store, Table t) {
    json rows = json::array();
    auto sorted = store;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    for (const auto& e : sorted) {
        try {
            switch (t) {
            case Table::Routes: {
                if (e.key.rfind("/route/", 0) != 0) continue;
                auto r = schema::parse_route(e.key, e.value);
                rows.push_back({{"key", e.key},
                                {"site_id", r.value.site_id},
                                {"system_name", r.value.system_name},
                                {"policy_tag", r.value.policy_tag}});
                break;
            }
            case Table::Linkstate: {
                if (e.key.rfind(schema::kLinkstatePrefix, 0) != 0) continue;
                auto r = schema::decode_linkstate(e.value);
                rows.push_back({{"src", r.src.render()},
                                {"dst", r.dst.render()},
                                {"status", r.status == schema::LinkStatus::Up ? "up" : "down"},
                                {"two_way_delay_us", r.two_way_delay_us},
                                {"jitter_us", r.jitter_us},
                                {"loss", r.loss}});
                break;
            }
            case Table::Nodes: {
                if (e.key.rfind("/node/", 0) != 0) continue;
                auto n = schema::decode_node(e.value);
                rows.push_back({{"role", schema::role_token(n.role)},
                                {"system_name", n.system_name},
                                {"site_id", n.site_id},
                                {"label", n.system_label}});
                break;
            }
            case Table::Services: {
                if (e.key.rfind("/service/", 0) != 0) continue;
                auto rest = e.key.substr(9);
                auto slash = rest.find('/');
                std::string slocs;
                for (const auto& s : schema::decode_service(e.value)) {
                    if (!slocs.empty()) slocs += " ";
                    slocs += s.color + "|" + s.private_addr.to_string() + ">" + s.public_addr.to_string();
                }
                rows.push_back(
                    {{"role", rest.substr(0, slash)}, {"system_name", rest.substr(slash + 1)}, {"slocs", slocs}});
                break;
            }
            }
        } catch (const Error&) {
            // Unreadable entries are not part of any table.
        }
    }
    return rows;
}

std::string format_table(const json& rows, Table t) {
    auto cols = columns(t);
    std::vector<std::size_t> width;
    for (const auto& c : cols) width.push_back(std::string(c.header).size());
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : rows) {
        std::vector<std::string> line;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            line.push_back(cell(r.at(cols[i].name)));
            width[i] = std::max(width[i], line.back().size());
        }
        cells.push_back(std::move(line));
    }
    std::ostringstream o;
    auto emit = [&](const std::vector<std::string>& line) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            o << line[i];
            if (i + 1 < line.size()) o << std::string(width[i] - line[i].size() + 2, ' ');
        }
        o << "\n";
    };
    std::vector<std::string> head;
    for (const auto& c : cols) head.push_back(c.header);
    emit(head);
    for (const auto& l : cells) emit(l);
    return o.str();
}

std::vector<kv::KvEntry> store_from_report(const json& report) {
    std::vector<kv::KvEntry> out;
    if (!report.contains("store")) throw Error(Errc::SnapshotMissing, "report has no store snapshot");
    for (const auto& e : report.at("store")) out.push_back(kv::KvEntry{e.at("key"), e.at("value"), {}, 0, 0});
    return out;
}

} // namespace ruta::scenario
