#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "facediff/cli.hpp"
#include "facediff/dataio.hpp"
#include "facediff/mesh_repr.hpp"
#include "facediff/synthetic.hpp"

using namespace facediff;
namespace fs = std::filesystem;

namespace {

int run(std::initializer_list<const char*> args) {
  std::vector<const char*> argv = {"facediff"};
  argv.insert(argv.end(), args.begin(), args.end());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string work_dir() {
  const auto dir = fs::temp_directory_path() / "facediff_cli_test";
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("no arguments or unknown input yields usage exit code 2") {
  CHECK(run({}) == 2);
  CHECK(run({"no-such-command"}) == 2);
  CHECK(run({"train", "--bogus-flag"}) == 2);
}

TEST_CASE("help exits zero") { CHECK(run({"--help"}) == 0); }

TEST_CASE("missing files yield runtime exit code 1") {
  CHECK(run({"eval", "--model", "/nonexistent.df3c", "--data", "/nonexistent"}) == 1);
}

TEST_CASE("end-to-end micro pipeline through the CLI") {
  const std::string dir = work_dir();
  const std::string data = dir + "/data";
  const std::string expert = dir + "/expert.df3c";
  const std::string model = dir + "/model.df3c";
  const std::string report = dir + "/report.txt";
  fs::remove_all(data);

  // config file + flag overrides
  const std::string cfg_path = dir + "/synth.cfg";
  {
    std::ofstream cfg(cfg_path, std::ios::trunc);
    cfg << "subjects=2\nutterances=2\nframes=24\n";
  }
  REQUIRE(run({"make-synthetic", "--config", cfg_path.c_str(), "--out", data.c_str(), "--seed",
               "3"}) == 0);
  CHECK(fs::exists(data + "/subject_01/utt_01.mesh.df3d"));
  CHECK(!fs::exists(data + "/subject_02"));  // config limited subjects to 2

  REQUIRE(run({"train-sync", "--data", data.c_str(), "--out", expert.c_str(), "--epochs", "2",
               "--pairs-per-epoch", "200", "--hidden", "16", "--embed-dim", "8", "--seed",
               "1"}) == 0);
  REQUIRE(fs::exists(expert));

  REQUIRE(run({"train", "--data", data.c_str(), "--out", model.c_str(), "--expert",
               expert.c_str(), "--steps", "30", "--batch-size", "2", "--latent-dim", "16",
               "--layers", "1", "--heads", "2", "--T", "8", "--seed", "1", "--log",
               (dir + "/loss.csv").c_str()}) == 0);
  REQUIRE(fs::exists(model));
  CHECK(fs::exists(dir + "/loss.csv"));

  REQUIRE(run({"eval", "--model", model.c_str(), "--data", data.c_str(), "--subset-size", "2",
               "--out", report.c_str()}) == 0);
  std::ifstream rep(report);
  std::string contents((std::istreambuf_iterator<char>(rep)), std::istreambuf_iterator<char>());
  CHECK(contents.find("avg_lve=") != std::string::npos);
  CHECK(contents.find("mult_mesh=") != std::string::npos);

  // build reference files from the dataset and sample with them
  const auto ds = load_dataset(data);
  const auto repr = decompose(ds.utterances[0].mesh, ds.utterances[0].pose, ds.rig, 10, 0);
  const std::string id_path = dir + "/ref_id.df3d";
  const std::string pose_path = dir + "/ref_pose.df3a";
  {
    FaceMeshSequence id_mesh(1, ds.config.n_vertices, ds.config.fps);
    id_mesh.vertices = repr.identity.vertices;
    write_mesh(id_mesh, id_path);
    AudioFeatureSequence pose_carrier;
    pose_carrier.n_frames = repr.pose.n_frames;
    pose_carrier.feature_dim = 3;
    pose_carrier.feature_rate = ds.config.fps;
    pose_carrier.features = repr.pose.rotations;
    write_audio(pose_carrier, pose_path);
  }
  const std::string audio_path = data + "/subject_00/utt_00.audio.df3a";
  const std::string out_mesh = dir + "/sampled.df3d";
  const std::string out_repr = dir + "/sampled_repr.df3a";
  REQUIRE(run({"sample", "--model", model.c_str(), "--audio", audio_path.c_str(), "--out",
               out_mesh.c_str(), "--out-repr", out_repr.c_str(), "--ref-identity",
               id_path.c_str(), "--ref-pose", pose_path.c_str(), "--seed", "9", "--fps",
               "30"}) == 0);

  // referenced slices of the output representation equal the reference files
  const auto sampled = read_representation(out_repr);
  const auto ref_id = read_mesh(id_path);
  const auto ref_pose = read_audio(pose_path);
  CHECK(sampled.identity.vertices == ref_id.vertices);
  CHECK(sampled.pose.rotations == ref_pose.features);

  // decompose -> render round trip through the CLI
  const std::string repr_path = dir + "/decomposed.df3a";
  const std::string rendered = dir + "/rendered.df3d";
  REQUIRE(run({"decompose", "--mesh", (data + "/subject_00/utt_00.mesh.df3d").c_str(), "--pose",
               (data + "/subject_00/utt_00.pose.df3a").c_str(), "--lip-mask",
               (data + "/lip_mask.df3m").c_str(), "--pivot", "0", "0", "0", "--out",
               repr_path.c_str()}) == 0);
  REQUIRE(run({"render", "--repr", repr_path.c_str(), "--pivot", "0", "0", "0", "--out",
               rendered.c_str(), "--fps", "30"}) == 0);
  const auto original = read_mesh(data + "/subject_00/utt_00.mesh.df3d");
  const auto round = read_mesh(rendered);
  REQUIRE(round.vertices.size() == original.vertices.size());
  double max_err = 0.0;
  for (size_t i = 0; i < round.vertices.size(); ++i) {
    max_err = std::max(max_err, std::abs(round.vertices[i] - original.vertices[i]));
  }
  CHECK(max_err < 1e-3);  // two float32 quantization passes

  const std::string obj_dir = dir + "/objs";
  REQUIRE(run({"export-obj", "--mesh", (data + "/subject_00/utt_00.mesh.df3d").c_str(),
               "--topology", (data + "/topology.df3t").c_str(), "--out",
               obj_dir.c_str()}) == 0);
  CHECK(fs::exists(obj_dir + "/frame_000000.obj"));
}
