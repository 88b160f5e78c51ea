#include <doctest.h>

#include <cmath>

#include "adm/model.hpp"
#include "test_helpers.hpp"

using namespace adm;

namespace {

// Classes are well-separated Gaussian blobs; good for prediction-consistency
// checks where some task difficulty is wanted, dial `sep` down.
SynthResult blob_dataset(int classes, int images, int n, int c, double sep, CovKind kind,
                         uint64_t seed) {
    return synth_gaussian_dataset(SynthSpec{classes, images, n, c, sep, kind}, seed);
}

std::vector<uint32_t> all_ids(const LabeledDataset& ds) {
    std::vector<uint32_t> ids;
    for (const auto& cl : ds.classes) ids.push_back(cl.class_id);
    return ids;
}

FusionHead off_head() {
    FusionHead h;
    h.mode = StandardizeMode::Off;
    return h;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("fuse example with standardization off") {
    FusionHead head = off_head();
    const Vec fused = fuse({0.5, 2.0}, {3.0, 1.0}, head, nullptr);
    CHECK(fused[0] == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(fused[1] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("fuse requires context in episode-stats mode") {
    FusionHead head;  // episode-stats by default
    CHECK_THROWS_AS(fuse({1.0}, {1.0}, head, nullptr), MissingContextError);

    EpisodeContext ctx{{{1.0, 2.0}, {0.5, 0.25}}};
    CHECK_NOTHROW(fuse({1.0, 2.0}, {0.5, 0.25}, head, &ctx));
}

TEST_CASE("classify argmax with tie toward lowest index") {
    CHECK(classify({2.5, -1.0}) == 0);
    CHECK(classify({1.0, 1.0}) == 0);
    CHECK(classify({0.25}) == 0);
    CHECK(classify({-3.0, -1.0, -1.0}) == 1);
}

TEST_CASE("branch scores: self-match query maximizes both branches") {
    const SynthResult r = blob_dataset(4, 3, 6, 3, 4.0, CovKind::Isotropic, 5);
    // craft an episode whose query 0 is byte-identical to class 2's support
    Episode ep;
    for (int i = 0; i < 4; ++i) ep.support.push_back({static_cast<uint32_t>(i), i, {0}});
    ep.queries.push_back({2, 2, 0});  // same image as the support of class 2
    ep.queries.push_back({1, 1, 1});

    const EpisodeContext ctx =
        branch_scores(r.dataset, ep, Embedding::identity(), 0.1, 1, false);
    REQUIRE(ctx.size() == 2);
    REQUIRE(ctx[0].kl.size() == 4);

    CHECK(ctx[0].kl[2] <= 1e-9);
    for (int i = 0; i < 4; ++i)
        if (i != 2) CHECK(ctx[0].kl[i] > 1e-3);
    CHECK(ctx[0].i2c[2] == doctest::Approx(6.0).epsilon(1e-9));  // n*k with n=6, k=1
}

TEST_CASE("identity embedding equals linear identity matrix") {
    const SynthResult r = blob_dataset(3, 4, 5, 3, 2.0, CovKind::DiagonalRandom, 9);
    Rng stream = episode_stream(1, 0);
    const Episode ep = sample_episode(r.dataset, all_ids(r.dataset), EpisodeSpec{3, 1, 2}, stream);

    const EpisodeContext a = branch_scores(r.dataset, ep, Embedding::identity(), 0.1, 1, false);
    const EpisodeContext b =
        branch_scores(r.dataset, ep, Embedding::linear(Mat::identity(3)), 0.1, 1, false);
    REQUIRE(a.size() == b.size());
    for (size_t q = 0; q < a.size(); ++q) {
        CHECK(a[q].kl == b[q].kl);
        CHECK(a[q].i2c == b[q].i2c);
    }
}

TEST_CASE("5-way episode yields 5-dimensional branch vectors") {
    const SynthResult r = blob_dataset(8, 3, 4, 3, 2.0, CovKind::Isotropic, 13);
    Rng stream = episode_stream(4, 2);
    const Episode ep = sample_episode(r.dataset, all_ids(r.dataset), EpisodeSpec{5, 1, 2}, stream);
    const EpisodeContext ctx = branch_scores(r.dataset, ep, Embedding::identity(), 0.1, 1, false);
    for (const auto& q : ctx) {
        CHECK(q.kl.size() == 5);
        CHECK(q.i2c.size() == 5);
    }
}

TEST_CASE("branch ablation: w=[1,0] reproduces the standalone KL classifier") {
    const SynthResult r = blob_dataset(10, 6, 8, 4, 1.5, CovKind::RandomSpd, 17);
    const std::vector<uint32_t> ids = all_ids(r.dataset);
    const EpisodeSpec spec{5, 1, 3};

    ModelParams kl_only;
    kl_only.head.w = {1.0, 0.0};
    ModelParams i2c_only;
    i2c_only.head.w = {0.0, 1.0};

    for (uint64_t idx = 0; idx < 100; ++idx) {
        Rng stream = episode_stream(23, idx);
        const Episode ep = sample_episode(r.dataset, ids, spec, stream);
        const EpisodeTensors tensors = episode_tensors(r.dataset, ep);
        const EpisodeSummaries summaries = build_summaries(tensors, 0.1, {true, false, true});
        const EpisodeContext ctx = branch_scores(tensors, summaries, 1, false);

        const std::vector<Vec> fused_kl = fuse_batch(ctx, kl_only.head);
        const std::vector<Vec> fused_i2c = fuse_batch(ctx, i2c_only.head);
        for (size_t q = 0; q < ctx.size(); ++q) {
            // standalone KL: argmin over distances; standalone i2c: argmax
            int kl_pred = 0, i2c_pred = 0;
            for (int i = 1; i < tensors.ways; ++i) {
                if (ctx[q].kl[i] < ctx[q].kl[kl_pred]) kl_pred = i;
                if (ctx[q].i2c[i] > ctx[q].i2c[i2c_pred]) i2c_pred = i;
            }
            CHECK(classify(fused_kl[q]) == kl_pred);
            CHECK(classify(fused_i2c[q]) == i2c_pred);
        }
    }
}

TEST_CASE("scaling w by a positive constant never changes decisions") {
    const SynthResult r = blob_dataset(6, 4, 6, 3, 1.0, CovKind::RandomSpd, 29);
    const std::vector<uint32_t> ids = all_ids(r.dataset);
    ModelParams base;
    base.head.w = {0.7, 1.3};
    ModelParams scaled = base;
    scaled.head.w = {0.7 * 13.5, 1.3 * 13.5};

    for (uint64_t idx = 0; idx < 30; ++idx) {
        Rng stream = episode_stream(31, idx);
        const Episode ep = sample_episode(r.dataset, ids, EpisodeSpec{4, 1, 3}, stream);
        const EpisodeContext ctx =
            branch_scores(r.dataset, ep, Embedding::identity(), 0.1, 1, false);
        const std::vector<Vec> fa = fuse_batch(ctx, base.head);
        const std::vector<Vec> fb = fuse_batch(ctx, scaled.head);
        for (size_t q = 0; q < ctx.size(); ++q) CHECK(classify(fa[q]) == classify(fb[q]));
    }
}

TEST_CASE("CMS two-class scores are exact negatives") {
    const SynthResult r = blob_dataset(5, 5, 6, 3, 1.0, CovKind::RandomSpd, 37);
    const std::vector<uint32_t> ids = all_ids(r.dataset);
    for (uint64_t idx = 0; idx < 100; ++idx) {
        Rng stream = episode_stream(41, idx);
        const Episode ep = sample_episode(r.dataset, ids, EpisodeSpec{2, 1, 4}, stream);
        const EpisodeContext ctx =
            branch_scores(r.dataset, ep, Embedding::identity(), 0.1, 1, true);
        for (const auto& q : ctx) CHECK(q.kl[0] == -q.kl[1]);
    }
}

TEST_CASE("self-consistent pure-KL classification") {
    // a query byte-identical to a class's pooled support set gets that class
    const SynthResult r = blob_dataset(6, 2, 5, 3, 3.0, CovKind::Isotropic, 43);
    for (int target = 0; target < 6; ++target) {
        Episode ep;
        for (int i = 0; i < 6; ++i) ep.support.push_back({static_cast<uint32_t>(i), i, {1}});
        ep.queries.push_back({target, target, 1});
        const EpisodeContext ctx =
            branch_scores(r.dataset, ep, Embedding::identity(), 0.1, 1, false);
        int pred = 0;
        for (int i = 1; i < 6; ++i)
            if (ctx[0].kl[i] < ctx[0].kl[pred]) pred = i;
        CHECK(pred == target);
    }
}

TEST_CASE("evaluation is deterministic across runs and worker counts") {
    const SynthResult r = blob_dataset(8, 20, 6, 4, 1.2, CovKind::RandomSpd, 47);
    const std::vector<uint32_t> ids = all_ids(r.dataset);
    EvalOptions opts;
    opts.spec = EpisodeSpec{5, 1, 5};
    opts.tasks = 60;
    opts.reps = 2;
    opts.seed = 7;
    ModelParams params;

    opts.workers = 1;
    const EvalReport a = evaluate(r.dataset, ids, parse_row_spec("adm"), opts, params);
    const EvalReport b = evaluate(r.dataset, ids, parse_row_spec("adm"), opts, params);
    opts.workers = 8;
    const EvalReport c = evaluate(r.dataset, ids, parse_row_spec("adm"), opts, params);
    CHECK(a.mean_acc == b.mean_acc);
    CHECK(a.ci95 == b.ci95);
    CHECK(a.mean_acc == c.mean_acc);
    CHECK(a.ci95 == c.ci95);
}

TEST_CASE("point-mass classes evaluate to perfect accuracy") {
    // every class collapses to a distinct point, separation >> noise
    LabeledDataset ds;
    for (int ci = 0; ci < 6; ++ci) {
        LabeledClass cl;
        cl.class_id = static_cast<uint32_t>(ci);
        for (int ii = 0; ii < 6; ++ii) {
            std::vector<float> data(8, 0.0f);
            data[ci] = 50.0f;  // one-hot point per class, c=8 > 6 classes
            cl.images.emplace_back(1, 8, std::move(data));
        }
        ds.classes.push_back(std::move(cl));
    }
    EvalOptions opts;
    opts.spec = EpisodeSpec{5, 1, 3};
    opts.tasks = 20;
    opts.reps = 1;
    opts.seed = 3;
    ModelParams params;
    const EvalReport rep = evaluate(ds, all_ids(ds), parse_row_spec("kl"), opts, params);
    CHECK(rep.mean_acc == 1.0);
    CHECK(rep.ci95 == 0.0);
}

TEST_CASE("ci95 reproduces the two-task hand computation") {
    const EvalReport rep = make_report({1.0, 0.5}, 2, 1, ReportConfig{});
    CHECK(rep.mean_acc == doctest::Approx(0.75).epsilon(1e-15));
    const double expect = 1.96 * std::sqrt(0.125) / std::sqrt(2.0);
    CHECK(std::abs(rep.ci95 - expect) <= 1e-12);
}

TEST_CASE("report JSON carries the exact field set") {
    ReportConfig cfg;
    cfg.measure = "kl";
    cfg.seed = 12;
    const EvalReport rep = make_report({0.5, 0.75, 1.0}, 3, 1, cfg);
    const nlohmann::ordered_json j = report_to_json(rep);
    CHECK(j.contains("mean_acc"));
    CHECK(j.contains("ci95"));
    CHECK(j["tasks"] == 3);
    CHECK(j["reps"] == 1);
    CHECK(j["config"]["measure"] == "kl");
    CHECK(j["config"]["seed"] == 12);
    CHECK(j.size() == 5);
}

TEST_CASE("ablation rows share episodes") {
    const SynthResult r = blob_dataset(8, 10, 5, 3, 1.0, CovKind::RandomSpd, 53);
    const std::vector<uint32_t> ids = all_ids(r.dataset);
    EvalOptions opts;
    opts.spec = EpisodeSpec{4, 1, 4};
    opts.tasks = 25;
    opts.reps = 1;
    opts.seed = 11;
    ModelParams params;

    const std::vector<RowResult> rows =
        evaluate_rows(r.dataset, ids, default_ablation_rows(), opts, params);
    REQUIRE(rows.size() == 6);

    // the kl row must match a standalone kl evaluation exactly, episode for episode
    const EvalReport solo = evaluate(r.dataset, ids, parse_row_spec("kl"), opts, params);
    const auto kl_row = std::find_if(rows.begin(), rows.end(),
                                     [](const RowResult& rr) { return rr.name == "kl"; });
    REQUIRE(kl_row != rows.end());
    CHECK(kl_row->mean_acc == solo.mean_acc);
}

TEST_CASE("row spec parsing") {
    CHECK(parse_row_spec("adm").adm);
    CHECK(parse_row_spec("adm-cms").cms);
    CHECK(parse_row_spec("kl-cms").cms);
    CHECK(parse_row_spec("kl-cms").kind == MeasureKind::KL);
    CHECK(parse_row_spec("wass-approx-cms").kind == MeasureKind::WassersteinApprox);
    CHECK(!parse_row_spec("wass-exact").cms);
    CHECK_THROWS_AS(parse_row_spec("i2c-cms"), InvalidSpecError);
    CHECK_THROWS_AS(parse_row_spec("bogus"), InvalidSpecError);
}

TEST_CASE("params JSON round-trip") {
    ModelParams p;
    p.embedding = Embedding::linear(Mat::identity(3));
    p.embedding.matrix(0, 2) = -1.25;
    p.head.w = {0.5, 2.0};
    p.head.gamma = {1.5, 0.25};
    p.head.beta = {-0.125, 3.0};
    p.head.mode = StandardizeMode::RunningStats;
    p.head.running_mean = {10.0, -4.0};
    p.head.running_var = {2.0, 8.0};

    const ModelParams r = params_from_json(params_to_json(p));
    CHECK(r.embedding.kind == EmbeddingKind::Linear);
    CHECK(r.embedding.matrix.data() == p.embedding.matrix.data());
    CHECK(r.head.w == p.head.w);
    CHECK(r.head.gamma == p.head.gamma);
    CHECK(r.head.beta == p.head.beta);
    CHECK(r.head.mode == p.head.mode);
    CHECK(r.head.running_mean == p.head.running_mean);
    CHECK(r.head.running_var == p.head.running_var);
}

TEST_SUITE_END();
