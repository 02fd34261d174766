// ruta: run scenarios, dump store tables, decode SRoU hexdumps.

#include "ruta/error.hpp"
#include "ruta/hex.hpp"
#include "ruta/scenario.hpp"
#include "ruta/srou.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace ruta;
namespace sc = ruta::scenario;

namespace {

constexpr int kExitExpectation = 1;
constexpr int kExitSchema = 2;

std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("RUTA_SEED");
    if (!v || !*v) return std::nullopt;
    char* end = nullptr;
    auto s = std::strtoull(v, &end, 10);
    if (*end) throw CLI::ValidationError("RUTA_SEED", "not an unsigned integer");
    return s;
}

bool write_file(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        return true;
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
    return bool(out);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool looks_like_report(const std::string& text) {
    auto p = text.find_first_not_of(" \t\r\n");
    if (p == std::string::npos || text[p] != '{') return false;
    auto j = nlohmann::json::parse(text, nullptr, false);
    return !j.is_discarded() && j.contains("store") && j.contains("flows");
}

int cmd_run(const std::string& file, std::optional<std::uint64_t> seed, std::optional<double> until_s,
            const std::string& trace, const std::string& report_path, bool quiet) {
    sc::Scenario s;
    try {
        s = sc::load(file);
    } catch (const sc::SchemaError& e) {
        std::cerr << file << ": schema error: " << e.what() << "\n";
        return kExitSchema;
    }
    sc::RunOptions o;
    o.seed = env_seed() ? env_seed() : seed;
    if (until_s) o.until = sim::Duration(std::llround(*until_s * 1e9));
    auto r = sc::run(s, o);
    if (!trace.empty() && !write_file(trace, r.trace_jsonl)) {
        std::cerr << "cannot write " << trace << "\n";
        return kExitExpectation;
    }
    if (!report_path.empty() && !write_file(report_path, sc::render(r.report))) {
        std::cerr << "cannot write " << report_path << "\n";
        return kExitExpectation;
    }
    if (!quiet) {
        std::cerr << "scenario " << s.name << " seed " << r.report["seed"] << "\n";
        for (const auto& [name, f] : r.report["flows"].items()) {
            std::cerr << "  flow " << name << ": sent " << f["sent"] << " delivered " << f["delivered"] << " lost "
                      << f["lost"];
            if (f["latency_ms"].contains("p50")) std::cerr << " p50 " << f["latency_ms"]["p50"] << "ms";
            std::cerr << " via " << f["via"].dump() << "\n";
        }
    }
    for (const auto& f : r.failures) std::cerr << "FAILED: " << f << "\n";
    return r.ok() ? 0 : kExitExpectation;
}

int cmd_dump(const std::string& source, const std::string& table, bool as_json, std::optional<std::uint64_t> seed) {
    auto t = sc::table_from_string(table);
    if (!t) {
        std::cerr << "unknown table '" << table << "' (routes, linkstate, nodes, services)\n";
        return kExitSchema;
    }
    std::vector<kv::KvEntry> store;
    std::string text = read_file(source);
    if (looks_like_report(text)) {
        try {
            store = sc::store_from_report(nlohmann::json::parse(text));
        } catch (const Error& e) {
            std::cerr << to_string(e.code()) << ": " << e.what() << "\n";
            return kExitExpectation;
        }
    } else {
        sc::Scenario s;
        try {
            s = sc::parse(text);
        } catch (const sc::SchemaError& e) {
            std::cerr << source << ": schema error: " << e.what() << "\n";
            return kExitSchema;
        }
        sc::RunOptions o;
        o.seed = env_seed() ? env_seed() : seed;
        store = sc::run(s, o).store;
    }
    auto rows = sc::dump_table(store, *t);
    if (as_json)
        std::cout << rows.dump(2) << "\n";
    else
        std::cout << sc::format_table(rows, *t);
    return 0;
}

int cmd_decode(const std::string& file) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = parse_hex(read_file(file));
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << "\n";
        return kExitExpectation;
    }
    try {
        for (const auto& f : srou::annotate(bytes))
            std::cout << std::setw(4) << f.offset << "  " << std::setw(3) << f.bits << "b  " << f.name << ": "
                      << f.value << "\n";
    } catch (const Error& e) {
        std::cout << to_string(e.code());
        if (e.offset()) std::cout << " at offset " << *e.offset();
        std::cout << ": " << e.what() << "\n";
        return kExitExpectation;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ruta overlay simulator and tooling"};
    app.require_subcommand(1);

    std::string run_file, trace, report;
    std::optional<std::uint64_t> run_seed;
    std::optional<double> until;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "Run a scenario and write its trace and report");
    run->add_option("scenario", run_file, "Scenario file (YAML or JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", run_seed, "Seed (RUTA_SEED overrides)");
    run->add_option("--until", until, "Virtual run time in seconds");
    run->add_option("--trace", trace, "Trace output, line-delimited JSON ('-' for stdout)");
    run->add_option("--report", report, "Report output, JSON ('-' for stdout)");
    run->add_flag("--quiet", quiet, "No summary on stderr");

    std::string dump_src, dump_table;
    bool dump_json = false;
    std::optional<std::uint64_t> dump_seed;
    auto* dump = app.add_subcommand("dump", "Dump a store table from a scenario run or a saved report");
    dump->add_option("source", dump_src, "Scenario file or report JSON")->required()->check(CLI::ExistingFile);
    dump->add_option("table", dump_table, "routes, linkstate, nodes or services")->required();
    dump->add_flag("--json", dump_json, "Machine-readable rows");
    dump->add_option("--seed", dump_seed, "Seed when running a scenario (RUTA_SEED overrides)");

    std::string hex_file;
    auto* decode = app.add_subcommand("decode", "Annotate an SRoU hexdump field by field");
    decode->add_option("hexfile", hex_file, "Hex text file")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
        if (*run) return cmd_run(run_file, run_seed, until, trace, report, quiet);
        if (*dump) return cmd_dump(dump_src, dump_table, dump_json, dump_seed);
        if (*decode) return cmd_decode(hex_file);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitExpectation;
    }
    return 0;
}
