#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <random>

#include "dcap/report.hpp"

using namespace dcap;
namespace fs = std::filesystem;

namespace {

ErrorRecord rec(const std::string& method, const std::string& seq, std::int64_t frame,
                ScenarioKind kind, double dt, double rra_val) {
    ErrorRecord r;
    r.method = method;
    r.sequence_id = seq;
    r.frame_index = frame;
    r.scenario = kind;
    r.error.delta_t = dt;
    r.error.delta_x = dt / 3;
    r.error.delta_y = dt / 2;
    r.error.delta_z = dt / 4;
    r.error.rra = rra_val;
    return r;
}

const ReportRow* find_row(const MetricsReport& rep, const std::string& method,
                          const std::string& scenario) {
    for (const ReportRow& r : rep.rows)
        if (r.method == method && r.scenario == scenario) return &r;
    return nullptr;
}

}  // namespace

TEST_CASE("aggregate: single frame and two-frame mean") {
    MetricsReport one = aggregate({rec("m", "s0", 0, ScenarioKind::u_turn, 0.7, 0.1)});
    const ReportRow* row = find_row(one, "m", "u_turn");
    REQUIRE(row);
    CHECK(row->delta_t == 0.7);
    CHECK(row->rra == 0.1);
    CHECK(row->frames == 1);

    MetricsReport two = aggregate({rec("m", "s0", 0, ScenarioKind::u_turn, 1.0, 0.0),
                                   rec("m", "s0", 1, ScenarioKind::u_turn, 2.0, 0.2)});
    row = find_row(two, "m", "u_turn");
    REQUIRE(row);
    CHECK(row->delta_t == Catch::Approx(1.5));
    CHECK(row->frames == 2);
    const ReportRow* overall = find_row(two, "m", "overall");
    REQUIRE(overall);
    CHECK(overall->delta_t == Catch::Approx(1.5));
}

TEST_CASE("aggregate: empty scenario groups are absent, not zero") {
    MetricsReport rep = aggregate({rec("m", "s0", 0, ScenarioKind::straight, 0.5, 0.01)});
    CHECK(find_row(rep, "m", "straight"));
    CHECK_FALSE(find_row(rep, "m", "u_turn"));
    CHECK_THROWS_AS(aggregate({}), EmptyGroup);
}

TEST_CASE("aggregate is permutation invariant bit for bit") {
    std::vector<ErrorRecord> records;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int s = 0; s < 4; ++s)
        for (int f = 0; f < 50; ++f)
            records.push_back(rec("m", "seq_" + std::to_string(s), f,
                                  s % 2 ? ScenarioKind::u_turn : ScenarioKind::straight, u(rng),
                                  u(rng) * 0.1));
    MetricsReport a = aggregate(records);
    std::shuffle(records.begin(), records.end(), rng);
    MetricsReport b = aggregate(records);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].method == b.rows[i].method);
        CHECK(a.rows[i].scenario == b.rows[i].scenario);
        CHECK(a.rows[i].delta_t == b.rows[i].delta_t);  // identical bits
        CHECK(a.rows[i].rra == b.rows[i].rra);
    }
}

TEST_CASE("published-row fixture renders verbatim") {
    // Canned inputs with the comparison's headline means: the static baseline
    // at dT 1.284 / RRA 0.148 and the full model at dT 0.452 / RRA 0.042.
    std::vector<ErrorRecord> records = {
        rec("static calibration", "s0", 0, ScenarioKind::u_turn, 1.284, 0.148),
        rec(ablation_method_name(true, true), "s0", 0, ScenarioKind::u_turn, 0.452, 0.042)};
    MetricsReport rep = aggregate(records);
    std::string text = report_to_text(rep);
    CHECK(text.find("1.284") != std::string::npos);
    CHECK(text.find("0.148") != std::string::npos);
    CHECK(text.find("0.452") != std::string::npos);
    CHECK(text.find("0.042") != std::string::npos);
    CHECK(text.find("dcap (w/ cca, w/ cta)") != std::string::npos);
    // Best values are marked within the shared scenario group.
    CHECK(text.find("0.452*") != std::string::npos);
}

TEST_CASE("identical canned errors produce identical ablation rows") {
    std::vector<ErrorRecord> records;
    const std::pair<bool, bool> grid[] = {{false, false}, {true, false}, {false, true}, {true, true}};
    for (auto [cca, cta] : grid) {
        records.push_back(rec(ablation_method_name(cca, cta), "s0", 0, ScenarioKind::straight,
                              0.9, 0.05));
        records.push_back(rec(ablation_method_name(cca, cta), "s0", 1, ScenarioKind::straight,
                              1.1, 0.07));
    }
    MetricsReport rep = aggregate(records);
    std::vector<const ReportRow*> rows;
    for (auto [cca, cta] : grid) rows.push_back(find_row(rep, ablation_method_name(cca, cta), "straight"));
    for (const ReportRow* r : rows) {
        REQUIRE(r);
        CHECK(r->delta_t == rows[0]->delta_t);
        CHECK(r->rra == rows[0]->rra);
        CHECK(r->frames == rows[0]->frames);
    }
}

TEST_CASE("error files round trip") {
    std::vector<ErrorRecord> records;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int f = 0; f < 25; ++f)
        records.push_back(rec("kf", "seq_7", f, ScenarioKind::roundabout, u(rng), u(rng)));

    fs::path path = fs::temp_directory_path() / ("dcap_err_" + std::to_string(::getpid()) + ".txt");
    write_errors(records, path);
    std::vector<ErrorRecord> back = read_errors(path);
    fs::remove(path);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(back[i].method == "kf");
        CHECK(back[i].sequence_id == records[i].sequence_id);
        CHECK(back[i].frame_index == records[i].frame_index);
        CHECK(back[i].error.delta_t == records[i].error.delta_t);  // exact round trip
        CHECK(back[i].error.rra == records[i].error.rra);
    }
}

TEST_CASE("csv means are re-derivable from raw records") {
    std::vector<ErrorRecord> records;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int f = 0; f < 40; ++f)
        records.push_back(rec("m", "s", f, ScenarioKind::long_curve, u(rng), u(rng) * 0.1));
    MetricsReport rep = aggregate(records);

    // Recompute from the raw records in canonical order.
    double sum = 0.0;
    for (const ErrorRecord& r : records) sum += r.error.delta_t;
    const ReportRow* row = find_row(rep, "m", "long_curve");
    REQUIRE(row);
    CHECK(std::abs(row->delta_t - sum / 40.0) < 1e-12);

    std::string csv = report_to_csv(rep);
    CHECK(csv.find("m,long_curve,40,") != std::string::npos);
}

TEST_CASE("ablation runner emits a four-config table deterministically") {
    RigGeometry rig = RigGeometry::standard();
    std::vector<Sequence> train_seqs, val_seqs;
    for (int i = 0; i < 2; ++i) {
        ScenarioSpec spec;
        spec.kind = i ? ScenarioKind::single_turn : ScenarioKind::u_turn;
        spec.duration_s = 4.0;
        spec.seed = 50 + i;
        train_seqs.push_back(build_records(generate(spec, rig), rig, "tr_" + std::to_string(i)));
    }
    ScenarioSpec vspec;
    vspec.kind = ScenarioKind::u_turn;
    vspec.duration_s = 4.0;
    vspec.seed = 60;
    val_seqs.push_back(build_records(generate(vspec, rig), rig, "val_0"));

    ModelConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.landmark_count = 4;
    cfg.epochs = 1;
    cfg.encoder_noise_sigma = 0.0;
    cfg.seed = 77;

    AblationOutcome a = run_ablation(train_seqs, val_seqs, cfg);
    const std::pair<bool, bool> grid[] = {{false, false}, {true, false}, {false, true}, {true, true}};
    for (auto [cca, cta] : grid) {
        const ReportRow* row = find_row(a.combined, ablation_method_name(cca, cta), "overall");
        REQUIRE(row);
        CHECK(row->frames == static_cast<std::int64_t>(val_seqs[0].frames.size()));
    }
    // Table 2 row order.
    std::vector<std::string> methods;
    for (const ReportRow& r : a.combined.rows)
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
    REQUIRE(methods.size() == 4);
    CHECK(methods[0] == ablation_method_name(false, false));
    CHECK(methods[3] == ablation_method_name(true, true));

    AblationOutcome b = run_ablation(train_seqs, val_seqs, cfg);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i)
        CHECK(a.records[i].error.delta_t == b.records[i].error.delta_t);  // bit-identical rerun
}
