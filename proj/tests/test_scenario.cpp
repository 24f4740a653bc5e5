#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "shellac/scenario.hpp"

using namespace shellac;

namespace {

const char* kRigidScenario = R"(
# rigid sphere smoke test
[mesh]
source = sphere
level = 2
fit = sphere
fit_radius = 0.5

[wave]
ka = 3

[study]
kind = rigid

[sampling]
radius = 5
count = 48

[solver]
dense = true
)";

}  // namespace

TEST(Scenario, ParseDefaultsAndOverrides) {
    const Scenario sc = parse_scenario_text(kRigidScenario, "test");
    EXPECT_EQ(sc.mesh_source, Scenario::MeshSource::GeneratedSphere);
    EXPECT_EQ(sc.sphere_level, 2);
    EXPECT_EQ(sc.kind, Scenario::StudyKind::Rigid);
    EXPECT_DOUBLE_EQ(sc.ka, 3.0);
    EXPECT_DOUBLE_EQ(sc.wavenumber(), 3.0);
    EXPECT_EQ(sc.effective_sample_count(), 48);
    EXPECT_TRUE(sc.dense);
    // untouched defaults
    EXPECT_DOUBLE_EQ(sc.material.E, 210e9);
    EXPECT_DOUBLE_EQ(sc.fluid.c, 1482.0);
}

TEST(Scenario, ParseErrorsAreDiagnosed) {
    EXPECT_THROW(parse_scenario_text("[mesh]\nsource = torus\n", "t"), Error);
    EXPECT_THROW(parse_scenario_text("[wave]\nka = banana\n", "t"), Error);
    EXPECT_THROW(parse_scenario_text("stray = 1\n", "t"), Error);
    try {
        parse_scenario_text("[wave]\nka = nope\n", "myfile");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("myfile"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("ka"), std::string::npos);
    }
}

TEST(Scenario, SampleCountScalesWithWavenumber) {
    Scenario sc = parse_scenario_text("[wave]\nka = 40\n", "t");
    // >= 12 samples per wavelength of arc at radius 5
    EXPECT_GE(sc.effective_sample_count(), static_cast<int>(12 * 40 * 5));
    sc.sample_count = 360;
    EXPECT_EQ(sc.effective_sample_count(), 360);
}

TEST(Scenario, MaxPointwiseErrorFormula) {
    std::vector<Complex> oracle = {{1, 0}, {0, 2}, {3, 4}};
    EXPECT_DOUBLE_EQ(compute_max_pointwise_error(oracle, oracle), 0.0);
    std::vector<Complex> scaled = oracle;
    for (auto& v : scaled) v *= 1.1;
    EXPECT_NEAR(compute_max_pointwise_error(scaled, oracle), 0.1, 1e-12);
    // phase changes leave magnitudes untouched
    std::vector<Complex> rotated = oracle;
    for (auto& v : rotated) v *= std::exp(Complex(0, 0.7));
    EXPECT_NEAR(compute_max_pointwise_error(rotated, oracle), 0.0, 1e-12);
    std::vector<Complex> zero = {{0, 0}, {1, 0}, {1, 0}};
    EXPECT_THROW(compute_max_pointwise_error(oracle, zero), Error);
}

TEST(Scenario, RigidRunProducesOutputsAndIsDeterministic) {
    const Scenario sc = parse_scenario_text(kRigidScenario, "test");
    const std::string dir1 = testing::TempDir() + "run1";
    const std::string dir2 = testing::TempDir() + "run2";
    std::filesystem::create_directories(dir1);
    std::filesystem::create_directories(dir2);

    const ResultBundle a = run_scenario(sc, dir1, 7);
    const ResultBundle b = run_scenario(sc, dir2, 7);

    EXPECT_TRUE(a.max_pointwise_error.has_value());
    EXPECT_LT(*a.max_pointwise_error, 0.05);
    EXPECT_GT(a.elements_per_wavelength, 6.0);

    // bit-identical CSV across runs
    auto slurp = [](const std::string& p) {
        std::ifstream in(p);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    };
    const std::string csv1 = slurp(dir1 + "/profile.csv");
    const std::string csv2 = slurp(dir2 + "/profile.csv");
    EXPECT_FALSE(csv1.empty());
    EXPECT_EQ(csv1, csv2);

    EXPECT_TRUE(std::filesystem::exists(dir1 + "/surface.vtk"));
    EXPECT_TRUE(std::filesystem::exists(dir1 + "/run_metadata.txt"));
    const std::string meta = slurp(dir1 + "/run_metadata.txt");
    EXPECT_NE(meta.find("elements_per_wavelength"), std::string::npos);
    EXPECT_NE(meta.find("max_pointwise_error"), std::string::npos);

    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);
}

TEST(Scenario, AnalyticOnlyStudySkipsSolver) {
    Scenario sc = parse_scenario_text(kRigidScenario, "test");
    sc.kind = Scenario::StudyKind::AnalyticOnly;
    const ResultBundle out = run_scenario(sc);
    EXPECT_EQ(out.gmres_iterations, 0);
    EXPECT_EQ(out.theta.size(), 48u);
    EXPECT_DOUBLE_EQ(out.assemble_seconds, 0.0);
    for (double m : out.magnitude) EXPECT_GT(m, 0.0);
}

TEST(Scenario, CoupledCompressedSmoke) {
    // tiny compressed coupled run end to end (42 vertices, all-dense blocks)
    Scenario sc = parse_scenario_text(kRigidScenario, "test");
    sc.sphere_level = 1;
    sc.kind = Scenario::StudyKind::Coupled;
    sc.dense = false;
    sc.ka = 2.0;
    sc.sample_count = 24;
    const ResultBundle out = run_scenario(sc);
    EXPECT_TRUE(out.max_pointwise_error.has_value());
    EXPECT_GT(out.gmres_iterations, 0);
    EXPECT_LE(out.compression_ratio, 1.0);
}
