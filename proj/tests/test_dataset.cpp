#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "specfed/specgen.hpp"
#include "specfed/waveform.hpp"

using namespace specfed;
namespace fs = std::filesystem;

namespace {

GenerationConfig small_config() {
    GenerationConfig cfg;
    cfg.seed = 77;
    cfg.slots = 50;
    cfg.plan.num_subchannels = 8;
    cfg.plan.subcarriers_per_subchannel = 4;
    cfg.plan.num_stations = 3;
    cfg.plan.num_uavs = 3;
    cfg.samples_per_record = 16;
    cfg.snr_grid_db = {-10.0, 0.0, 10.0, 20.0};
    cfg.markov.assign(8, TransitionMatrix::from_rates(0.15, 0.3));
    return cfg;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("specfed_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("record count is slots x snr levels per UAV") {
    auto cfg = small_config();
    const auto data = generate_datasets(cfg);
    REQUIRE(data.per_uav.size() == 3);
    for (const auto& ds : data.per_uav) REQUIRE(ds.records.size() == 50 * 4);
    // the full sweep is K * |SNR| * slots records
    std::size_t total = 0;
    for (const auto& ds : data.per_uav) total += ds.records.size();
    REQUIRE(total == 3 * 4 * 50);
}

TEST_CASE("zero slots produce valid empty datasets") {
    auto cfg = small_config();
    cfg.slots = 0;
    TempDir dir("empty");
    generate_dataset(cfg, dir.str());
    const auto ds = load_dataset(dataset_path(dir.str(), 0));
    REQUIRE(ds.records.empty());
    REQUIRE(ds.num_subchannels == 8);
    REQUIRE(ds.samples_per_record == 16);
}

TEST_CASE("identical seeds produce byte-identical dataset files") {
    auto cfg = small_config();
    TempDir a("det_a"), b("det_b");
    generate_dataset(cfg, a.str());
    generate_dataset(cfg, b.str());
    for (int k = 0; k < 3; ++k)
        REQUIRE(read_file(dataset_path(a.str(), k)) == read_file(dataset_path(b.str(), k)));

    // a different seed must change the content
    cfg.seed = 78;
    TempDir c("det_c");
    generate_dataset(cfg, c.str());
    REQUIRE(read_file(dataset_path(a.str(), 0)) != read_file(dataset_path(c.str(), 0)));
}

TEST_CASE("dataset file round trip preserves records") {
    auto cfg = small_config();
    TempDir dir("roundtrip");
    const auto data = generate_dataset(cfg, dir.str());
    const auto loaded = load_dataset(dataset_path(dir.str(), 1), 1);
    const auto& orig = data.per_uav[1];
    REQUIRE(loaded.records.size() == orig.records.size());
    REQUIRE(loaded.snr_levels_db == orig.snr_levels_db);
    for (std::size_t i = 0; i < loaded.records.size(); ++i) {
        const auto& a = loaded.records[i];
        const auto& b = orig.records[i];
        REQUIRE(a.slot == b.slot);
        REQUIRE(a.label == b.label);
        REQUIRE(a.snr_db == Catch::Approx(b.snr_db));
        // storage is f32; loaded values equal the f32 round of the original
        REQUIRE(a.avg_power == static_cast<double>(static_cast<float>(b.avg_power)));
        for (std::size_t j = 0; j < a.iq.size(); ++j) {
            REQUIRE(a.iq[j].real() == static_cast<double>(static_cast<float>(b.iq[j].real())));
            REQUIRE(a.iq[j].imag() == static_cast<double>(static_cast<float>(b.iq[j].imag())));
        }
    }
}

TEST_CASE("labels are the union of station occupancy") {
    auto cfg = small_config();
    cfg.debug_occupancy = true;
    TempDir dir("labels");
    const auto data = generate_dataset(cfg, dir.str());
    const auto occ = load_occupancy(dir.str() + "/occupancy.spoc");
    REQUIRE(occ.size() == cfg.slots);
    for (const auto& ds : data.per_uav)
        for (const auto& rec : ds.records) REQUIRE(rec.label == make_label(occ[rec.slot]));
}

TEST_CASE("occupied subchannels carry spectral energy, vacant ones none") {
    // single-tap unit channels keep subchannels exactly orthogonal, so the
    // noise-free stream has zero energy outside labeled subchannels
    auto cfg = small_config();
    cfg.channel.taps = 1;
    cfg.channel.delay_spread = 1;
    cfg.channel.link_gain.assign(3, std::vector<double>(3, 1.0));
    const auto channels = make_scenario_channels(cfg);
    RandomStream occ_rng(cfg.seed);
    OccupancyProcess proc(cfg.markov, cfg.plan.num_stations);
    proc.reset_stationary(occ_rng);
    int checked = 0;
    for (int slot = 0; slot < 20; ++slot) {
        const auto& masks = proc.step(occ_rng);
        const std::uint32_t label = make_label(masks);
        std::vector<std::vector<std::complex<double>>> sig(3);
        RandomStream wrng(1000 + slot);
        for (int b = 0; b < 3; ++b) sig[static_cast<std::size_t>(b)] = synth_waveform(cfg.plan, masks[static_cast<std::size_t>(b)], wrng);
        const auto rx = propagate(channels[0], sig);
        const auto energy = subchannel_energies(cfg.plan, rx);
        double max_occupied = 0.0;
        for (int m = 0; m < cfg.plan.num_subchannels; ++m)
            if ((label >> m) & 1u) max_occupied = std::max(max_occupied, energy[static_cast<std::size_t>(m)]);
        for (int m = 0; m < cfg.plan.num_subchannels; ++m) {
            if ((label >> m) & 1u) {
                REQUIRE(energy[static_cast<std::size_t>(m)] > 1e-6 * std::max(max_occupied, 1.0));
            } else if (max_occupied > 0.0) {
                REQUIRE(energy[static_cast<std::size_t>(m)] < 1e-9 * max_occupied);
                ++checked;
            }
        }
    }
    REQUIRE(checked > 0);
}

TEST_CASE("halving every link gain quarters the received power") {
    auto cfg = small_config();
    cfg.channel.link_gain.assign(3, std::vector<double>(3, 1.0));
    auto cfg_half = cfg;
    cfg_half.channel.link_gain.assign(3, std::vector<double>(3, 0.5));
    const auto full = generate_datasets(cfg);
    const auto half = generate_datasets(cfg_half);
    int nonzero = 0;
    for (int k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < full.per_uav[static_cast<std::size_t>(k)].records.size(); ++i) {
            const double p_full = full.per_uav[static_cast<std::size_t>(k)].records[i].avg_power;
            const double p_half = half.per_uav[static_cast<std::size_t>(k)].records[i].avg_power;
            if (p_full == 0.0) {
                REQUIRE(p_half == 0.0);
                continue;
            }
            REQUIRE(p_full / p_half == Catch::Approx(4.0).epsilon(1e-9));
            REQUIRE(p_full > p_half);
            ++nonzero;
        }
    }
    REQUIRE(nonzero > 0);
}

TEST_CASE("train and eval splits partition records by slot") {
    auto cfg = small_config();
    const auto data = generate_datasets(cfg);
    const auto& ds = data.per_uav[0];
    const auto train = ds.train_indices();
    const auto eval = ds.eval_indices();
    REQUIRE(train.size() + eval.size() == ds.records.size());
    REQUIRE(double(train.size()) / ds.records.size() == Catch::Approx(0.7).margin(0.05));
    const std::uint64_t boundary = ds.split.train_boundary();
    for (auto i : train) REQUIRE(ds.records[i].slot < boundary);
    for (auto i : eval) REQUIRE(ds.records[i].slot >= boundary);
    // stratification: each SNR level keeps the same train share
    for (double snr : ds.snr_levels_db) {
        const auto idx = ds.eval_indices_at_snr(snr);
        REQUIRE(idx.size() == eval.size() / ds.snr_levels_db.size());
    }
}

TEST_CASE("generation config validation") {
    auto cfg = small_config();
    cfg.markov.pop_back();
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.samples_per_record = 1000;  // exceeds fft_size
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.snr_grid_db.clear();
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config();
    cfg.channel.link_gain.assign(2, std::vector<double>(3, 1.0));  // wrong UAV count
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}
