// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "apce/config.h"
#include "apce/runner.h"
#include "test_util.h"

namespace apce {
namespace {

TEST(KeyValues, ParsesCommentsAndWhitespace) {
    const auto kv = parse_key_values("# comment\n\n  mode = dense \nchunk_size=64\r\n");
    EXPECT_EQ(kv.values.at("mode"), "dense");
    EXPECT_EQ(kv.values.at("chunk_size"), "64");
    EXPECT_EQ(kv.lines.at("chunk_size"), 4u);
}

TEST(KeyValues, ErrorsNameTheLine) {
    try {
        parse_key_values("mode = dense\nmode = apce\n", "a.conf");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("a.conf:2"), std::string::npos);
    }
    EXPECT_THROW(parse_key_values("just words\n"), ConfigError);
    EXPECT_THROW(parse_key_values(" = 3\n"), ConfigError);
    EXPECT_THROW(load_key_values(test::temp_path("missing.conf")), ConfigError);
}

TEST(RunConfig, SetsAndRejectsValues) {
    RunConfig c;
    c.set("seed", "9");
    EXPECT_EQ(c.seed, 9u);
    EXPECT_EQ(c.model.init_seed, 9u);
    c.set("reprioritization.enabled", "false");
    EXPECT_FALSE(c.reprioritization.enabled);
    EXPECT_THROW(c.set("nonsense", "1"), ConfigError);
    EXPECT_THROW(c.set("chunk_size", "-4"), ConfigError);
    EXPECT_THROW(c.set("chunk_size", "12x"), ConfigError);
    EXPECT_THROW(c.set("fraction", "nan"), ConfigError);
    EXPECT_THROW(c.set("mode", "sparse"), ConfigError);
    EXPECT_THROW(c.set("output.format", "xml"), ConfigError);
}

TEST(RunConfig, BadValueReportsSourceLine) {
    try {
        run_config_from(parse_key_values("mode = dense\nchunk_size = many\n"));
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(RunConfig, Validation) {
    RunConfig c;
    EXPECT_NO_THROW(c.validate());
    c.max_chunks = 3;
    c.fraction = 0.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.fraction = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.chunk_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.embedding_provider = "file";
    EXPECT_THROW(c.validate(), ConfigError);
    c = RunConfig{};
    c.model.d_head = 7;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, FractionToK) {
    EXPECT_EQ(fraction_to_k(0.7, 10), 7u);
    EXPECT_EQ(fraction_to_k(0.7, 11), 8u);  // 7.7
    EXPECT_EQ(fraction_to_k(0.5, 5), 3u);   // 2.5 rounds up
    EXPECT_EQ(fraction_to_k(0.01, 3), 1u);
    EXPECT_EQ(fraction_to_k(1.0, 38), 38u);
    EXPECT_EQ(fraction_to_k(0.7, 26), 18u);  // 18.2
    EXPECT_EQ(fraction_to_k(0.7, 34), 24u);  // 23.8
    RunConfig c;
    EXPECT_EQ(c.resolve_k(10), 7u);
    c.max_chunks = 40;
    EXPECT_EQ(c.resolve_k(10), 10u);
}

TEST(RunConfig, KeyValueRoundTrip) {
    RunConfig c;
    c.set("chunk_size", "128");
    c.set("fraction", "0.25");
    c.set("query.alpha", "0.3");
    c.set("input.query", "summarize it");
    KeyValues kv;
    for (const auto& [k, v] : c.to_key_values()) kv.values[k] = v;
    const auto back = run_config_from(kv);
    EXPECT_EQ(back.to_key_values(), c.to_key_values());
    for (auto key : RunConfig::keys()) EXPECT_FALSE(key.empty());
}

TEST(Sweep, AxisAndValues) {
    EXPECT_EQ(parse_sweep_axis("n_chunks"), SweepAxis::n_chunks);
    EXPECT_THROW(parse_sweep_axis("depth"), ConfigError);
    RunConfig base;
    auto c = apply_sweep_value(base, SweepAxis::n_chunks, "0.5");
    EXPECT_EQ(c.fraction, 0.5);
    EXPECT_FALSE(c.max_chunks);
    c = apply_sweep_value(base, SweepAxis::n_chunks, "7");
    EXPECT_EQ(c.max_chunks, 7u);
    EXPECT_FALSE(c.fraction);
    c = apply_sweep_value(base, SweepAxis::chunk_size, "400");
    EXPECT_EQ(c.chunk_size, 400u);
    c = apply_sweep_value(base, SweepAxis::reprioritization_interval, "25");
    EXPECT_EQ(c.reprioritization.interval, 25u);
    EXPECT_THROW(apply_sweep_value(base, SweepAxis::chunk_size, "big"), ConfigError);
    EXPECT_EQ(sweep_label(apply_sweep_value(base, SweepAxis::chunk_size, "800"), SweepAxis::chunk_size, "800"),
              "APCE (800 token chksize)");
}

RunConfig toy() {
    RunConfig c;
    for (const auto& [k, v] : std::map<std::string, std::string>{{"chunk_size", "16"},
                                                                 {"max_chunks", "2"},
                                                                 {"max_new_tokens", "12"},
                                                                 {"reprioritization.interval", "4"},
                                                                 {"load.per_chunk_load_latency", "0.1"},
                                                                 {"load.async_start_chunks", "2"},
                                                                 {"model.n_layers", "1"},
                                                                 {"model.n_heads", "2"},
                                                                 {"model.d_model", "16"},
                                                                 {"model.d_head", "8"},
                                                                 {"model.d_kv_total", "8"},
                                                                 {"model.d_ff", "32"},
                                                                 {"model.vocab_size", "512"},
                                                                 {"embedding.dim", "64"}}) {
        c.set(k, v);
    }
    return c;
}

CorpusRecord record() {
    CorpusRecord r;
    r.id = "r1";
    r.text =
        "The harbor woke before dawn and the fishermen checked their nets. Gulls circled over the boats. "
        "A storm gathered over the mountains to the west and the wind turned cold. The mayor rang the bell. "
        "Children ran along the pier while merchants closed their shutters against the rain.";
    r.query = "Summarize the storm and the harbor.";
    r.reference = "A storm reaches the harbor and the town prepares.";
    return r;
}

TEST(Runner, ReportsAreDeterministic) {
    const auto cfg = toy();
    Runner runner(cfg);
    const auto a = runner.run(record(), "r1-apce-s0");
    const auto b = runner.run(record(), "r1-apce-s0");
    EXPECT_EQ(run_report(a).dump(), run_report(b).dump());
    const auto j = run_report(a);
    EXPECT_EQ(j["schema_version"], kReportSchemaVersion);
    EXPECT_EQ(j["report_kind"], "run");
    EXPECT_TRUE(a.rouge.has_value());
    EXPECT_EQ(a.session.trace.output_tokens.size(), 12u);
}

TEST(Runner, DenseHasNoReplacements) {
    auto cfg = toy();
    cfg.mode = Mode::dense;
    const auto r = Runner(cfg).run(record(), "r1-dense-s0");
    EXPECT_TRUE(r.session.stats.events.empty());
    EXPECT_EQ(r.session.k_effective, r.session.n_chunks);
}

TEST(Runner, CsvRowMatchesHeader) {
    const auto cfg = toy();
    const auto r = Runner(cfg).run(record(), "x");
    const auto header = run_csv_header();
    const auto row = run_csv_row(r);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
    EXPECT_EQ(header.rfind("run_id,record_id,mode,k,", 0), 0u);
    EXPECT_FALSE(run_text(r).empty());
}

TEST(Runner, AggregateAndSweepReport) {
    const auto cfg = toy();
    Runner runner(cfg);
    std::vector<RunOutcome> runs;
    for (int i = 0; i < 3; ++i) runs.push_back(runner.run(record(), "r" + std::to_string(i)));
    const auto row = aggregate("n_chunks", "2", "APCE (2 chunks)", runs);
    EXPECT_EQ(row.runs, 3u);
    EXPECT_NEAR(row.ttft.stddev, 0.0, 1e-12);
    std::vector<SweepRow> rows{row};
    const auto j = sweep_report("sweep", rows, runs);
    EXPECT_EQ(j["report_kind"], "sweep");
    EXPECT_NE(sweep_csv(rows).find("APCE (2 chunks)"), std::string::npos);
}

TEST(Inputs, PlainTextNeedsQuery) {
    const auto p = test::temp_path("doc.txt");
    test::write_text(p, "some text here");
    RunConfig c;
    c.input = p;
    EXPECT_THROW(load_inputs(c), ConfigError);
    c.input_query = "summarize";
    const auto recs = load_inputs(c);
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].query, "summarize");
    c.input = test::temp_path("nope.jsonl");
    EXPECT_THROW(load_inputs(c), InputError);
}

}  // namespace
}  // namespace apce
