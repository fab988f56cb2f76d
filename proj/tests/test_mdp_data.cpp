#include <gtest/gtest.h>

#include <set>

#include "qol/envs.hpp"
#include "qol/mdp_data.hpp"
#include "test_util.hpp"

using namespace qol;

namespace {

Trajectory make_traj(std::int64_t id, std::size_t T, std::size_t d, double base) {
    Trajectory tr;
    tr.id = id;
    std::vector<double> s(d, base);
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> sp(d);
        for (std::size_t i = 0; i < d; ++i) sp[i] = s[i] + 0.1 * static_cast<double>(i + 1) + 1.0 / 3.0;
        tr.transitions.push_back({s, 0.25 * static_cast<double>(t), -1.0 / 7.0 * static_cast<double>(t), sp});
        s = sp;
    }
    return tr;
}

const std::string kHeader2 = "traj_id,t,s_1,s_2,a,r,sp_1,sp_2\n";

}  // namespace

TEST(MdpData, CsvRoundTripSmallDataset) {
    test::TempDir dir;
    const Dataset d({make_traj(0, 3, 2, 0.5), make_traj(1, 3, 2, -1.25)});
    save_dataset(d, dir.file("d.csv"), DataFormat::csv);
    const auto back = load_dataset(dir.file("d.csv"), DataFormat::csv);
    EXPECT_EQ(back.size(), 2u);
    EXPECT_EQ(back.horizon(), 3u);
    EXPECT_EQ(back.state_dim(), 2u);
    EXPECT_EQ(back.trajectories(), d.trajectories());
}

TEST(MdpData, JsonRoundTripKeepsMetadata) {
    test::TempDir dir;
    const auto d = generate_dataset(make_env(EnvId::III), 4, 6, 11);
    save_dataset(d, dir.file("d.json"), DataFormat::json);
    const auto back = load_dataset(dir.file("d.json"), DataFormat::json);
    EXPECT_EQ(back, d);
    EXPECT_EQ(back.meta().env, std::optional<std::string>("III"));
    EXPECT_EQ(back.meta().seed, std::optional<std::uint64_t>(11));
}

TEST(MdpData, GeneratedDatasetRoundTripsBitExactly) {
    test::TempDir dir;
    const auto d = generate_dataset(make_env(EnvId::I), 5, 24, 3);
    save_dataset(d, dir.file("d.csv"), DataFormat::csv);
    EXPECT_EQ(load_dataset(dir.file("d.csv"), DataFormat::csv).trajectories(), d.trajectories());
}

TEST(MdpData, RowsAreReorderedByTrajectoryAndTime) {
    test::TempDir dir;
    test::write_text(dir.file("d.csv"), kHeader2 +
                                            "1,1,0,0,0,0,0,0\n"
                                            "0,1,2,2,2,2,2,2\n"
                                            "1,0,3,3,3,3,3,3\n"
                                            "0,0,4,4,4,4,4,4\n");
    const auto d = load_dataset(dir.file("d.csv"), DataFormat::csv);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d[0].id, 0);
    EXPECT_EQ(d[0].transitions[0].action, 4.0);
    EXPECT_EQ(d[0].transitions[1].action, 2.0);
    EXPECT_EQ(d[1].transitions[0].action, 3.0);
}

TEST(MdpData, NanRewardNamesTheRow) {
    test::TempDir dir;
    test::write_text(dir.file("d.csv"), kHeader2 +
                                            "0,0,1,1,0.5,0,1,1\n"
                                            "0,1,1,1,0.5,nan,1,1\n");
    try {
        load_dataset(dir.file("d.csv"), DataFormat::csv);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    }
}

TEST(MdpData, MixedTrajectoryLengthsRejected) {
    test::TempDir dir;
    const Dataset a({make_traj(0, 24, 1, 0.0)});
    const Dataset b({make_traj(1, 36, 1, 0.0)});
    save_dataset(a, dir.file("a.csv"), DataFormat::csv);
    save_dataset(b, dir.file("b.csv"), DataFormat::csv);
    const auto body = test::read_text(dir.file("b.csv"));
    test::write_text(dir.file("ab.csv"), test::read_text(dir.file("a.csv")) + body.substr(body.find('\n') + 1));
    try {
        load_dataset(dir.file("ab.csv"), DataFormat::csv);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("inconsistent T"), std::string::npos) << e.what();
    }
}

TEST(MdpData, ShortTrajectoryAndBadHeaderRejected) {
    test::TempDir dir;
    test::write_text(dir.file("short.csv"), kHeader2 + "0,0,1,1,0.5,0,1,1\n");
    EXPECT_THROW(load_dataset(dir.file("short.csv"), DataFormat::csv), DataError);
    test::write_text(dir.file("hdr.csv"), "id,t,s_1,s_2,a,r,sp_1,sp_2\n0,0,1,1,0.5,0,1,1\n");
    EXPECT_THROW(load_dataset(dir.file("hdr.csv"), DataFormat::csv), DataError);
    test::write_text(dir.file("dup.csv"), kHeader2 + "0,0,1,1,0.5,0,1,1\n0,0,1,1,0.5,0,1,1\n");
    EXPECT_THROW(load_dataset(dir.file("dup.csv"), DataFormat::csv), DataError);
}

TEST(MdpData, EmptyDatasetAndUnwritablePath) {
    EXPECT_THROW(Dataset(std::vector<Trajectory>{}), DataError);
    const Dataset d({make_traj(0, 3, 1, 0.0)});
    EXPECT_THROW(save_dataset(d, "/nonexistent-dir/x/d.csv", DataFormat::csv), IoError);
    EXPECT_THROW(load_dataset("/nonexistent-dir/x/d.csv", DataFormat::csv), IoError);
}

TEST(MdpData, FormatFromExtension) {
    EXPECT_EQ(format_from_path("a/b.json"), DataFormat::json);
    EXPECT_EQ(format_from_path("a/b.csv"), DataFormat::csv);
    EXPECT_EQ(format_from_path("noext"), DataFormat::csv);
}

TEST(Minibatch, FullSizeIsAPermutation) {
    const auto d = generate_dataset(make_env(EnvId::I), 10, 3, 1);
    Rng rng(5, Stream::minibatch);
    const auto v = sample_minibatch(d, 10, rng);
    std::set<std::size_t> ids(v.indices().begin(), v.indices().end());
    EXPECT_EQ(ids.size(), 10u);
}

TEST(Minibatch, DeterministicGivenSeed) {
    const auto d = generate_dataset(make_env(EnvId::I), 10, 3, 1);
    Rng r1(9, Stream::minibatch), r2(9, Stream::minibatch);
    EXPECT_EQ(sample_minibatch(d, 1, r1).indices(), sample_minibatch(d, 1, r2).indices());
}

TEST(Minibatch, FiveDistinctFromTwentyFive) {
    const auto d = generate_dataset(make_env(EnvId::I), 25, 3, 1);
    Rng rng(2, Stream::minibatch);
    for (int rep = 0; rep < 100; ++rep) {
        const auto v = sample_minibatch(d, 5, rng);
        EXPECT_EQ(std::set<std::size_t>(v.indices().begin(), v.indices().end()).size(), 5u);
    }
}

TEST(Minibatch, OutOfRangeRejected) {
    const auto d = generate_dataset(make_env(EnvId::I), 4, 3, 1);
    Rng rng(2, Stream::minibatch);
    EXPECT_THROW(sample_minibatch(d, 0, rng), ConfigError);
    EXPECT_THROW(sample_minibatch(d, 5, rng), ConfigError);
}

// 10^4 single-trajectory draws from n = 10; chi-square with 9 degrees of
// freedom, 1% critical value 21.666.
TEST(Minibatch, UniformOverTrajectories) {
    const auto d = generate_dataset(make_env(EnvId::I), 10, 2, 1);
    Rng rng(17, Stream::minibatch);
    std::vector<double> counts(10, 0.0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) counts[sample_minibatch(d, 1, rng).indices()[0]] += 1.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - draws / 10.0) * (c - draws / 10.0) / (draws / 10.0);
    EXPECT_LT(chi2, 21.666);
}

TEST(Standardizer, HandComputedMeanAndDeviation) {
    Trajectory tr;
    tr.transitions.push_back({{0.0}, 0.0, 0.0, {2.0}});
    tr.transitions.push_back({{2.0}, 2.0, 0.0, {0.0}});
    const auto st = fit_standardizer(Dataset({tr}));
    EXPECT_DOUBLE_EQ(st.mean[0], 1.0);
    EXPECT_DOUBLE_EQ(st.sd[0], 1.0);
    EXPECT_DOUBLE_EQ(st.mean[1], 1.0);
    EXPECT_DOUBLE_EQ(st.sd[1], 1.0);
}

TEST(Standardizer, ConstantCoordinatesPassThrough) {
    Trajectory tr;
    tr.transitions.push_back({{3.0, 1.0}, 0.5, 0.0, {3.0, 1.0}});
    tr.transitions.push_back({{3.0, 1.0}, 0.5, 0.0, {3.0, 1.0}});
    const auto st = fit_standardizer(Dataset({tr}));
    for (double s : st.sd) EXPECT_EQ(s, 1.0);
}

TEST(Standardizer, RefitOnStandardizedDataIsIdentity) {
    const auto d = generate_dataset(make_env(EnvId::II), 6, 8, 4);
    const auto st = fit_standardizer(d);
    std::vector<Trajectory> z;
    for (const auto& tr : d.trajectories()) {
        Trajectory out;
        out.id = tr.id;
        for (const auto& x : tr.transitions) {
            const auto v = st.apply(x.state, x.action);
            out.transitions.push_back({{v[0], v[1]}, v[2], x.reward, x.next_state});
        }
        z.push_back(out);
    }
    const auto again = fit_standardizer(Dataset(z));
    for (std::size_t i = 0; i < again.dim(); ++i) {
        EXPECT_NEAR(again.mean[i], 0.0, 1e-12);
        EXPECT_NEAR(again.sd[i], 1.0, 1e-12);
    }
}
