#include <doctest.h>

#include "ocl/errors.hpp"
#include "ocl/gdm.hpp"
#include "ocl/oracles.hpp"
#include "ocl/rng.hpp"

using namespace ocl;

namespace {

GdmConfig depths(std::size_t k_em, std::size_t k_sm, bool replay = true) {
  GdmConfig c;
  c.episodic = GammaGwrConfig::with_depth(k_em);
  c.semantic = GammaGwrConfig::with_depth(k_sm);
  c.replay_enabled = replay;
  return c;
}

// Categories on a ring, each with a few instances; an instance is a short
// jittered trajectory around its own center.
std::vector<LabeledFrame> instance_frames(Rng& rng, const std::vector<int>& categories, int instances, int frames,
                                          std::size_t dim = 4) {
  std::vector<LabeledFrame> out;
  for (int c : categories) {
    Rng centers(static_cast<std::uint64_t>(1000 + c));
    Vector center(dim);
    for (auto& v : center) v = centers.normal(0.0, 3.0);
    for (int i = 0; i < instances; ++i) {
      Vector inst = center;
      for (auto& v : inst) v += centers.normal(0.0, 0.8);
      for (int f = 0; f < frames; ++f) {
        Vector x = inst;
        for (auto& v : x) v += rng.normal(0.0, 0.15);
        out.push_back({x, c * instances + i, c});
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("temporal synapses count transitions") {
  TemporalSynapses p;
  p.observe(0, 1);
  CHECK(p.at(1, 0) == 1.0);
  CHECK(p.at(0, 1) == 0.0);
  CHECK(p.entries().size() == 1);
  p.observe(2, 2);
  p.observe(2, 2);
  CHECK(p.at(2, 2) == 2.0);

  Rng rng(4);
  std::vector<NeuronId> seq;
  for (int i = 0; i < 500; ++i) seq.push_back(static_cast<NeuronId>(rng.below(7)));
  TemporalSynapses q;
  for (std::size_t i = 1; i < seq.size(); ++i) q.observe(seq[i - 1], seq[i]);
  const auto counts = oracle::count_transitions(seq);
  CHECK(q.entries() == counts);

  q.remove(3);
  for (const auto& [key, s] : q.entries()) {
    CHECK(key.first != 3u);
    CHECK(key.second != 3u);
    CHECK(s >= 0.0);
  }

  TemporalSynapses decaying(0.5);
  decaying.observe(0, 1);
  decaying.observe(1, 2);
  CHECK(decaying.at(1, 0) == 0.5);
  CHECK(decaying.at(2, 1) == 1.0);
}

TEST_CASE("observe_transition rejects dead ids") {
  DualMemory dual(depths(1, 1), 2);
  dual.episodic().add_neuron({0.0, 0.0});
  dual.episodic().add_neuron({1.0, 0.0});
  dual.observe_transition(0, 1);
  CHECK(dual.synapses().at(1, 0) == 1.0);
  CHECK_THROWS_AS(dual.observe_transition(0, 9), StateError);
  CHECK_THROWS_AS(dual.observe_transition(9, 0), StateError);
}

TEST_CASE("RNAT on the three-neuron chain") {
  DualMemory dual(depths(1, 1), 2);
  REQUIRE(dual.lambda() == 3);
  for (int i = 0; i < 3; ++i) dual.episodic().add_neuron({static_cast<double>(i), 0.0});
  dual.observe_transition(0, 1);
  dual.observe_transition(1, 2);
  auto r = dual.generate_rnat(0);
  CHECK(r.ids == std::vector<NeuronId>{0, 1, 2, 1});
  REQUIRE(r.weights.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.weights[i] == dual.episodic().neuron(r.ids[i]).w);

  // A strong 2 -> 0 synapse is ignored because the seed is excluded.
  for (int i = 0; i < 5; ++i) dual.observe_transition(2, 0);
  CHECK(dual.generate_rnat(0).ids == std::vector<NeuronId>{0, 1, 2, 1});
  // From seed 1: 1 -> 2 -> 0, then 0's only successor is the excluded seed,
  // so the tie among {0, 2} goes to 0.
  CHECK(dual.generate_rnat(1).ids == std::vector<NeuronId>{1, 2, 0, 0});
  CHECK_THROWS_AS(dual.generate_rnat(7), StateError);
}

TEST_CASE("RNAT from an empty synapse matrix repeats the tie-break winner") {
  DualMemory dual(depths(2, 2), 1);
  for (int i = 0; i < 4; ++i) dual.episodic().add_neuron({static_cast<double>(i)});
  CHECK(dual.generate_rnat(0).ids == std::vector<NeuronId>{0, 1, 1, 1, 1, 1});
  CHECK(dual.generate_rnat(2).ids == std::vector<NeuronId>{2, 0, 0, 0, 0, 0});

  DualMemory lone(depths(1, 1), 1);
  lone.episodic().add_neuron({0.0});
  CHECK_THROWS_AS(lone.generate_rnat(0), StateError);
}

TEST_CASE("RNAT length is K_EM + K_SM + 2 prototypes") {
  for (std::size_t em = 1; em <= 3; ++em) {
    for (std::size_t sm = 1; sm <= 3; ++sm) {
      DualMemory dual(depths(em, sm), 1);
      CHECK(dual.lambda() == em + sm + 1);
      for (int i = 0; i < 3; ++i) dual.episodic().add_neuron({static_cast<double>(i)});
      dual.observe_transition(0, 1);
      const auto r = dual.generate_rnat(0);
      CHECK(r.ids.size() == em + sm + 2);
      CHECK(r.weights.size() == em + sm + 2);
    }
  }
  CHECK(DualMemory(depths(2, 2), 1).lambda() == 5);
}

TEST_CASE("replay") {
  DualMemory one(depths(1, 1), 1);
  one.episodic().add_neuron({0.0});
  const auto before = one.to_json();
  CHECK(one.replay_all() == 0);
  CHECK(one.to_json() == before);

  Rng rng(5);
  DualMemory dual(depths(1, 1), 4);
  const auto frames = instance_frames(rng, {0, 1}, 2, 15);
  dual.train_episode(frames);
  const std::size_t n = dual.episodic().size();
  REQUIRE(n >= 2);
  const auto ctx = dual.episodic().context();
  CHECK(dual.replay_all() == n);
  CHECK(dual.episodic().context().prev_w == ctx.prev_w);

  const auto more = instance_frames(rng, {2}, 2, 15);
  const std::size_t live = dual.episodic().size();
  const auto rep = dual.train_episode(more);
  CHECK(rep.replayed_trajectories == live);
  CHECK(rep.frames == more.size());
}

TEST_CASE("gem_to_gsm returns a live prototype") {
  DualMemory empty(depths(1, 1), 2);
  CHECK_THROWS_AS(empty.gem_to_gsm(std::vector<double>{0.0, 0.0}), StateError);

  Rng rng(6);
  DualMemory dual(depths(0, 0), 4);
  dual.train_episode(instance_frames(rng, {0, 1, 2}, 2, 10));
  for (const auto& [id, n] : dual.episodic().neurons()) CHECK(dual.gem_to_gsm(n.w) == n.w);
  for (int t = 0; t < 50; ++t) {
    Vector x(4);
    for (auto& v : x) v = rng.normal(0.0, 3.0);
    const Vector y = dual.gem_to_gsm(x);
    const auto b = dual.episodic().find_bmu(x).best;
    CHECK(y == dual.episodic().neuron(b).w);
    // Halfway towards the prototype stays inside the same Voronoi cell.
    Vector mid(4);
    for (std::size_t i = 0; i < 4; ++i) mid[i] = 0.5 * (x[i] + y[i]);
    CHECK(dual.gem_to_gsm(mid) == y);
  }
}

TEST_CASE("without replay a dual memory is plain sequential training of both networks") {
  Rng rng(7);
  const auto cfg = depths(1, 2, false);
  DualMemory dual(cfg, 4);
  GammaGwr gem(cfg.episodic, 4), gsm(cfg.semantic, 4);
  for (int episode = 0; episode < 3; ++episode) {
    const auto frames = instance_frames(rng, {episode, episode + 3}, 2, 8);
    dual.train_episode(frames);
    for (const auto& f : frames) {
      gem.train_step(f.x, f.instance);
      const Vector y = gem.neuron(gem.find_bmu(f.x).best).w;
      const int c = f.category;
      gsm.train_step(y, c, [c](const GammaGwr& net, NeuronId b) {
        return majority_label(net.neuron(b).label_hist) != c;
      });
    }
  }
  CHECK(dual.episodic().to_json() == gem.to_json());
  CHECK(dual.semantic().to_json() == gsm.to_json());
}

TEST_CASE("semantic growth only on misclassified input") {
  Rng rng(8);
  const auto cfg = depths(0, 0, false);
  DualMemory dual(cfg, 4);
  const auto frames = instance_frames(rng, {0, 1, 2, 3}, 2, 12);
  std::vector<std::size_t> order(frames.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t gated = 0;
  for (std::size_t i : order) {
    const auto& f = frames[i];
    DualMemory next = dual;
    const auto rep = next.train_episode(std::span(&f, 1));
    gated += rep.semantic_gated;
    if (dual.semantic().size() >= 2) {
      const Vector y = next.gem_to_gsm(f.x);
      const auto b = dual.semantic().find_bmu(y).best;
      if (majority_label(dual.semantic().neuron(b).label_hist) == f.category) {
        CHECK(rep.semantic_insertions == 0);
      }
    }
    dual = std::move(next);
  }
  CHECK(gated > 0);
}

TEST_CASE("instance and category labels") {
  Rng rng(9);
  DualMemory single(depths(1, 1), 4);
  const auto frames = instance_frames(rng, {3}, 1, 10);
  single.train_episode(frames);
  const std::vector<Vector> seq{frames[4].x};
  CHECK(single.classify_instance(seq) == frames[0].instance);
  CHECK(single.classify_category(seq) == 3);

  DualMemory dual(depths(1, 1), 4);
  CHECK_THROWS_AS(dual.classify_category(seq), StateError);
  std::vector<LabeledFrame> clash{{Vector(4, 0.0), 1, 0}, {Vector(4, 1.0), 1, 2}};
  CHECK_THROWS_AS(dual.train_episode(clash), ArgumentError);
  CHECK_THROWS_AS(dual.train_episode(std::span<const LabeledFrame>{}), ArgumentError);

  dual.train_episode(instance_frames(rng, {0, 1}, 3, 6));
  for (const auto& [inst, cat] : dual.instance_categories()) CHECK(cat == inst / 3);
}

TEST_CASE("category accuracy is at least instance accuracy") {
  // Frozen observation on an incremental four-category stream with three
  // instances per category.
  Rng rng(10);
  auto cfg = depths(1, 1);
  cfg.episodic.alpha = cfg.semantic.alpha = {0.9, 0.1};
  cfg.episodic.activity_threshold = 0.3;
  cfg.semantic.activity_threshold = 0.5;
  DualMemory dual(cfg, 4);
  std::vector<LabeledFrame> test;
  for (int c = 0; c < 4; ++c) {
    dual.train_episode(instance_frames(rng, {c}, 3, 20));
    const auto held = instance_frames(rng, {c}, 3, 5);
    test.insert(test.end(), held.begin(), held.end());
  }
  std::size_t inst_ok = 0, cat_ok = 0;
  for (const auto& f : test) {
    const std::vector<Vector> seq{f.x};
    if (dual.classify_instance(seq) == f.instance) ++inst_ok;
    if (dual.classify_category(seq) == f.category) ++cat_ok;
  }
  MESSAGE("instance " << inst_ok << " category " << cat_ok << " of " << test.size());
  CHECK(cat_ok >= inst_ok);
  CHECK(cat_ok >= test.size() * 9 / 10);
}

TEST_CASE("replay preserves the first category better than no replay") {
  auto run = [](bool replay) {
    Rng rng(11);
    auto cfg = depths(1, 1, replay);
    cfg.episodic.activity_threshold = 0.3;
    cfg.semantic.activity_threshold = 0.2;
    DualMemory dual(cfg, 4);
    Rng held_rng(12);
    const auto first = instance_frames(held_rng, {0}, 3, 10);
    for (int c = 0; c < 5; ++c) dual.train_episode(instance_frames(rng, {c}, 3, 20));
    std::size_t ok = 0;
    for (const auto& f : first) ok += dual.classify_category(std::vector<Vector>{f.x}) == 0;
    return ok;
  };
  const auto with = run(true), without = run(false);
  MESSAGE("first category correct: replay " << with << ", no replay " << without);
  CHECK(with >= without);
}

TEST_CASE("JSON") {
  Rng rng(13);
  DualMemory dual(depths(2, 2), 4);
  dual.train_episode(instance_frames(rng, {0, 1}, 2, 5));
  const auto j = dual.to_json();
  CHECK(j["lambda"] == 5);
  CHECK(j["replay_enabled"] == true);
  CHECK(j["temporal_synapses"].size() == dual.synapses().entries().size());
  CHECK(GammaGwr::from_json(j["episodic"]).to_json() == dual.episodic().to_json());
  CHECK(j["instance_to_category"]["3"] == 1);
}
