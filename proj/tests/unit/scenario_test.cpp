#include "ruta/scenario.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace ruta;
namespace sc = ruta::scenario;

namespace {

std::string scenario_path(const std::string& name) { return std::string(RUTA_SCENARIO_DIR) + "/" + name + ".yaml"; }

const std::string kMinimal = R"(schema: 1
name: tiny
seed: 9
until_s: 12
nodes:
  - name: A
    role: linecard
    site: 1
    slocs:
      - { private: "10.1.0.1:5547" }
    imports:
      - { type: 2, rt: "65000:1", table: 1 }
  - name: B
    role: linecard
    site: 2
    slocs:
      - { private: "10.1.0.2:5547" }
    imports:
      - { type: 2, rt: "65000:1", table: 1 }
links:
  - { a: A, b: B, delay_ms: 1 }
hosts:
  - { name: h1, linecard: A, mac: "02:00:00:00:00:01", ip: 10.0.0.1, vnid: 1, rt: "65000:1", rd: "1:1" }
  - { name: h2, linecard: B, mac: "02:00:00:00:00:02", ip: 10.0.0.2, vnid: 1, rt: "65000:1", rd: "2:1" }
flows:
  - { name: f, from: h1, to: h2, count: 10, interval_ms: 100, start_s: 5 }
expect:
  - { flow: f, delivered: 10, lost: 0, p50_ms: 1, via: [] }
)";

sc::SchemaError schema_error(const std::string& text) {
    try {
        sc::parse(text);
    } catch (const sc::SchemaError& e) {
        return e;
    }
    ADD_FAILURE() << "no schema error";
    return sc::SchemaError("", 0, "");
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    auto p = s.find(from);
    EXPECT_NE(p, std::string::npos) << from;
    return s.replace(p, from.size(), to);
}

} // namespace

TEST(ScenarioParse, MinimalRunsClean) {
    auto r = sc::run(sc::parse(kMinimal));
    EXPECT_TRUE(r.ok()) << r.failures.front();
    EXPECT_EQ(r.report["flows"]["f"]["delivered"], 10);
    EXPECT_TRUE(r.report["network"]["conserved"].get<bool>());
}

TEST(ScenarioParse, JsonIsAccepted) {
    auto s = sc::parse(R"({"schema": 1, "name": "j", "nodes": [{"name": "F", "role": "fabric",
        "slocs": [{"private": "10.0.0.1:17777"}]}]})");
    ASSERT_EQ(s.nodes.size(), 1u);
    EXPECT_EQ(s.nodes[0].role, schema::Role::Fabric);
}

TEST(ScenarioParse, DanglingLinkEndpointHasPathAndLine) {
    auto e = schema_error(replace(kMinimal, "{ a: A, b: B, delay_ms: 1 }", "{ a: A, b: C, delay_ms: 1 }"));
    EXPECT_EQ(e.path(), "$.links[0].b");
    EXPECT_EQ(e.line(), 21);
    EXPECT_NE(std::string(e.what()).find("dangling endpoint 'C'"), std::string::npos) << e.what();
}

TEST(ScenarioParse, UnknownKeyRejected) {
    auto e = schema_error(replace(kMinimal, "until_s: 12", "until_s: 12\nspeed: 3"));
    EXPECT_EQ(e.path(), "$.speed");
    EXPECT_EQ(e.line(), 5);
}

TEST(ScenarioParse, WrongSchemaVersion) {
    auto e = schema_error(replace(kMinimal, "schema: 1", "schema: 2"));
    EXPECT_EQ(e.path(), "$.schema");
}

TEST(ScenarioParse, BadFieldTypes) {
    EXPECT_EQ(schema_error(replace(kMinimal, "delay_ms: 1 }", "delay_ms: -1 }")).path(), "$.links[0].delay_ms");
    EXPECT_EQ(schema_error(replace(kMinimal, "ip: 10.0.0.1,", "ip: 10.0.0.300,")).path(), "$.hosts[0].ip");
    EXPECT_EQ(schema_error(replace(kMinimal, "role: linecard", "role: router")).path(), "$.nodes[0].role");
    EXPECT_EQ(schema_error(replace(kMinimal, "to: h2", "to: h9")).path(), "$.flows[0].to");
}

TEST(ScenarioParse, DuplicateNamesRejected) {
    auto e = schema_error(replace(kMinimal, "name: B\n", "name: A\n"));
    EXPECT_EQ(e.path(), "$.nodes[1].name");
}

TEST(ScenarioParse, HostOnNonLinecardRejected) {
    auto text = replace(kMinimal, "  - name: B\n    role: linecard", "  - name: B\n    role: fabric");
    text = replace(text, "10.1.0.2:5547\" }\n    imports:\n      - { type: 2, rt: \"65000:1\", table: 1 }\n", "10.1.0.2:5547\" }\n");
    EXPECT_EQ(schema_error(text).path().rfind("$.hosts[1]", 0), 0u) << schema_error(text).path();
}

TEST(ScenarioRun, UnmetExpectationIsAFailure) {
    auto r = sc::run(sc::parse(replace(kMinimal, "delivered: 10", "delivered: 11")));
    ASSERT_EQ(r.failures.size(), 1u);
    EXPECT_NE(r.failures[0].find("delivered 10 != 11"), std::string::npos) << r.failures[0];
}

TEST(ScenarioRun, SeedOverrideChangesReportSeed) {
    auto s = sc::parse(kMinimal);
    EXPECT_EQ(sc::run(s).report["seed"], 9);
    EXPECT_EQ(sc::run(s, {std::uint64_t(77), std::nullopt}).report["seed"], 77);
}

TEST(ScenarioRun, RerunIsByteIdentical) {
    auto s = sc::load(scenario_path("spine_leaf"));
    auto a = sc::run(s);
    auto b = sc::run(s);
    EXPECT_EQ(sc::render(a.report), sc::render(b.report));
    EXPECT_EQ(a.trace_jsonl, b.trace_jsonl);
}

TEST(ScenarioRun, BundledScenariosConserveDatagrams) {
    for (const char* name : {"spine_leaf", "multicloud", "native_socket_nat", "headless", "lease_expiry"}) {
        auto r = sc::run(sc::load(scenario_path(name)));
        EXPECT_TRUE(r.ok()) << name << ": " << (r.failures.empty() ? "" : r.failures.front());
        const auto& t = r.report["network"]["totals"];
        EXPECT_TRUE(r.report["network"]["conserved"].get<bool>()) << name << " " << t.dump();
    }
}

TEST(ScenarioTables, TextIsAProjectionOfJson) {
    auto r = sc::run(sc::load(scenario_path("spine_leaf")));
    for (auto t : {sc::Table::Routes, sc::Table::Linkstate, sc::Table::Nodes, sc::Table::Services}) {
        auto rows = sc::dump_table(r.store, t);
        ASSERT_FALSE(rows.empty());
        std::istringstream text(sc::format_table(rows, t));
        std::string line;
        std::getline(text, line); // header
        std::size_t i = 0;
        while (std::getline(text, line)) {
            ASSERT_LT(i, rows.size());
            for (const auto& [col, v] : rows[i].items()) {
                std::string cell = v.is_string() ? v.get<std::string>() : v.dump();
                if (v.is_number_float()) continue;
                EXPECT_NE(line.find(cell), std::string::npos) << col << " missing in: " << line;
            }
            ++i;
        }
        EXPECT_EQ(i, rows.size());
    }
}

TEST(ScenarioTables, RouteColumnsAndHostKey) {
    auto r = sc::run(sc::load(scenario_path("spine_leaf")));
    auto rows = sc::dump_table(r.store, sc::Table::Routes);
    bool found = false;
    for (const auto& row : rows) {
        EXPECT_TRUE(row.contains("site_id") && row.contains("system_name") && row.contains("policy_tag"));
        if (row["key"] == "/route/2/65000:1234/1:1234/02:00:0a:00:00:58/10.0.0.88") {
            found = true;
            EXPECT_EQ(row["system_name"], "LC_A");
        }
    }
    EXPECT_TRUE(found);
    auto head = sc::format_table(rows, sc::Table::Routes);
    EXPECT_EQ(head.rfind("Key", 0), 0u);
    EXPECT_NE(head.find("SiteID"), std::string::npos);
    EXPECT_NE(head.find("SystemName"), std::string::npos);
    EXPECT_NE(head.find("PolicyTag"), std::string::npos);
}

TEST(ScenarioTables, ReportRoundTripsStore) {
    auto r = sc::run(sc::parse(kMinimal));
    auto back = sc::store_from_report(nlohmann::json::parse(sc::render(r.report)));
    EXPECT_EQ(sc::dump_table(back, sc::Table::Routes), sc::dump_table(r.store, sc::Table::Routes));
    EXPECT_THROW(sc::store_from_report(nlohmann::json::object()), Error);
}

TEST(ScenarioMath, PercentileNearestRank) {
    std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    EXPECT_EQ(sc::percentile(v, 0.5), 5);
    EXPECT_EQ(sc::percentile(v, 0.9), 9);
    EXPECT_EQ(sc::percentile(v, 0.99), 10);
    EXPECT_EQ(sc::percentile({42}, 0.5), 42);
}
