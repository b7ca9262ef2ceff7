#include <gtest/gtest.h>

#include <set>

#include "support.hpp"
#include "trustnbr/error.hpp"
#include "trustnbr/io.hpp"

using namespace trustnbr;
using testsupport::TempDir;

namespace {

Dataset balanced(std::size_t n) {
    Dataset d;
    d.features = Matrix(n, 1);
    d.feature_names = {"x"};
    for (std::size_t i = 0; i < n; ++i) {
        d.features(i, 0) = static_cast<double>(i);
        d.labels.push_back(static_cast<int>(i % 2));
        d.ids.push_back(static_cast<InstanceId>(i));
    }
    return d;
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Csv, ParsesNumericColumns) {
    const auto d = parse_csv("a,b,y\n1,2,0\n3,4,1\n5,6,0\n7.5,-8,1\n", "y");
    EXPECT_EQ(d.size(), 4u);
    EXPECT_EQ(d.n_features(), 2u);
    EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 0, 1}));
    EXPECT_DOUBLE_EQ(d.features(3, 0), 7.5);
    EXPECT_DOUBLE_EQ(d.features(3, 1), -8.0);
    EXPECT_EQ(d.ids, (std::vector<InstanceId>{0, 1, 2, 3}));
}

TEST(Csv, OneHotEncodesCategoricalColumns) {
    const auto d = parse_csv("a,color,y\n1,red,0\n2,blue,1\n3,red,1\n", "y");
    ASSERT_EQ(d.n_features(), 3u);
    EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "color=blue", "color=red"}));
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 1; j < 3; ++j) EXPECT_TRUE(d.features(i, j) == 0.0 || d.features(i, j) == 1.0);
    EXPECT_EQ(d.features(0, 2), 1.0);
    EXPECT_EQ(d.features(1, 1), 1.0);
}

TEST(Csv, RejectsNonBinaryLabel) {
    const auto msg = error_of([] { parse_csv("a,y\n1,0\n2,2\n", "y"); });
    EXPECT_NE(msg.find("non-binary label"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'y'"), std::string::npos) << msg;
}

TEST(Csv, MissingLabelColumnIsNamed) {
    const auto msg = error_of([] { parse_csv("a,b\n1,0\n", "target"); });
    EXPECT_NE(msg.find("'target'"), std::string::npos) << msg;
}

TEST(Csv, QuotedFieldsAndBom) {
    const auto d = parse_csv("\xEF\xBB\xBF\"a\",name,y\r\n1,\"x, \"\"quoted\"\"\",1\r\n2,plain,0\r\n", "y");
    EXPECT_EQ(d.feature_names[0], "a");
    EXPECT_EQ(d.feature_names[1], "name=plain");
    EXPECT_EQ(d.feature_names[2], "name=x, \"quoted\"");
}

TEST(Csv, MissingValuesRejectedOrImputed) {
    const std::string text = "a,y\n1,0\n,1\n3,1\n";
    EXPECT_THROW(parse_csv(text, "y"), DataError);
    const auto d = parse_csv(text, "y", {.impute_missing = true});
    EXPECT_DOUBLE_EQ(d.features(1, 0), 2.0);
}

TEST(Csv, IdColumnAndRoundTrip) {
    const auto d = parse_csv("id,a,y\n10,0.1,0\n20,0.30000000000000004,1\n", "y", {.id_column = "id"});
    EXPECT_EQ(d.ids, (std::vector<InstanceId>{10, 20}));
    EXPECT_EQ(d.n_features(), 1u);
    const auto again = parse_csv(to_csv(d), "label", {.id_column = "id"});
    EXPECT_EQ(again.features, d.features);
    EXPECT_EQ(again.ids, d.ids);
    EXPECT_EQ(again.labels, d.labels);
}

TEST(Csv, DuplicateIdsRejected) { EXPECT_THROW(parse_csv("id,a,y\n1,0,0\n1,1,1\n", "y", {.id_column = "id"}), DataError); }

TEST(Csv, LoadMissingFile) { EXPECT_THROW(load_csv("/nonexistent/file.csv", "y"), DataError); }

TEST(Split, StratifiedSizes) {
    const auto s = split_three_way(balanced(100), {}, 7);
    EXPECT_EQ(s.train.size(), 50u);
    EXPECT_EQ(s.test.size(), 25u);
    EXPECT_EQ(s.production.size(), 25u);
    EXPECT_EQ(s.train.positives(), 25u);
    EXPECT_NEAR(static_cast<double>(s.test.positives()) / 25.0, 0.5, 0.05);
    EXPECT_NEAR(static_cast<double>(s.production.positives()) / 25.0, 0.5, 0.05);
}

TEST(Split, PartitionIsDisjointAndComplete) {
    const auto d = testsupport::random_dataset(237, 3, 5);
    const auto s = split_three_way(d, {0.6, 0.2, 0.2}, 99);
    std::multiset<InstanceId> ids;
    for (const Dataset* part : {&s.train, &s.test, &s.production}) ids.insert(part->ids.begin(), part->ids.end());
    EXPECT_EQ(ids, std::multiset<InstanceId>(d.ids.begin(), d.ids.end()));
    EXPECT_EQ(s.train.positives() + s.test.positives() + s.production.positives(), d.positives());
}

TEST(Split, DeterministicForSeed) {
    const auto d = testsupport::random_dataset(300, 2, 1);
    const auto a = split_three_way(d, {}, 42), b = split_three_way(d, {}, 42), c = split_three_way(d, {}, 43);
    EXPECT_EQ(split_manifest(a), split_manifest(b));
    EXPECT_NE(split_manifest(a)["train_ids"], split_manifest(c)["train_ids"]);
}

TEST(Split, EmptyPartIsAnError) {
    const auto msg = error_of([] { split_three_way(balanced(10), {0.999, 0.0005, 0.0005}, 1); });
    EXPECT_EQ(msg, "empty split part");
}

TEST(Split, BadFractions) {
    EXPECT_THROW(split_three_way(balanced(10), {0.5, 0.5, 0.5}, 1), std::invalid_argument);
    EXPECT_THROW(split_three_way(balanced(10), {1.0, 0.0, 0.0}, 1), std::invalid_argument);
}

TEST(Normalizer, ConstantColumnGetsUnitScale) {
    Dataset d = balanced(4);
    for (std::size_t i = 0; i < 4; ++i) d.features(i, 0) = 3.0;
    const auto n = Normalizer::fit(d);
    EXPECT_EQ(n.scale()[0], 1.0);
    const auto z = n.apply(d);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(z.features(i, 0), 0.0);
}

TEST(Normalizer, HandZScore) {
    Dataset d = balanced(2);
    d.features(0, 0) = 0.0;
    d.features(1, 0) = 2.0;
    const auto z = Normalizer::fit(d).apply(d);
    EXPECT_DOUBLE_EQ(z.features(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(z.features(1, 0), 1.0);
}

TEST(Normalizer, DimensionMismatch) {
    const auto n = Normalizer::fit(balanced(4));
    EXPECT_THROW(n.apply(testsupport::random_dataset(4, 2, 1)), DimensionError);
}

TEST(Normalizer, InvertAndJsonRoundTrip) {
    const auto d = testsupport::random_dataset(50, 4, 3);
    const auto n = Normalizer::fit(d);
    const auto back = n.invert(n.apply(d));
    for (std::size_t k = 0; k < d.features.values().size(); ++k)
        EXPECT_NEAR(back.features.values()[k], d.features.values()[k], 1e-12);
    const auto n2 = Normalizer::from_json(n.to_json());
    EXPECT_EQ(n2.shift(), n.shift());
    EXPECT_EQ(n2.scale(), n.scale());
}

TEST(Surrogate, ShapeAndDeterminism) {
    const auto a = make_phoneme_surrogate(2000, 3);
    const auto b = make_phoneme_surrogate(2000, 3);
    EXPECT_EQ(a.n_features(), 5u);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    const double rate = static_cast<double>(a.positives()) / 2000.0;
    EXPECT_GT(rate, 0.15);
    EXPECT_LT(rate, 0.45);
    a.validate();
}

TEST(Io, FormatDoubleRoundTrips) {
    testsupport::Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
}

TEST(Io, AtomicWriteLeavesNoTemporaries) {
    TempDir dir;
    write_file_atomic(dir / "a.txt", "hello");
    write_file_atomic(dir / "a.txt", "world");
    EXPECT_EQ(read_file(dir / "a.txt"), "world");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
    EXPECT_EQ(files, 1u);
}

TEST(Io, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Io, DoublesRoundTripAndSizeCheck) {
    TempDir dir;
    const std::vector<double> v{1.5, -0.0, 1e-300, 3.0};
    write_doubles(dir / "v.f64", v);
    EXPECT_EQ(read_doubles(dir / "v.f64", 4), v);
    EXPECT_THROW(read_doubles(dir / "v.f64", 5), FormatError);
}

TEST(Rng, KeyedStreamsAreReproducible) {
    Rng a({5, 1}), b({5, 1}), c({5, 2});
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
    Rng r(1);
    for (int i = 0; i < 1000; ++i) {
        EXPECT_LT(r.uniform_index(7), 7u);
        const double u = r.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}
