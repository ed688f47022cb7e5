#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "sll/checkpoint.hpp"

using namespace sll;

TEST_CASE("container round-trips tensors and metadata bitwise") {
  checkpoint::Container c;
  c.meta = {{"kind", "test"}, {"note", 42}};
  RngStream rng(3);
  Tensor a = Tensor::randn({4, 5}, rng, 1.3);
  Tensor b = Tensor::randn({7}, rng, 0.01);
  c.tensors.push_back({"a", a.shape(), a.values()});
  c.tensors.push_back({"b", b.shape(), b.values()});

  const std::string path = "test_container.bin";
  checkpoint::write_container(path, c);
  checkpoint::Container back = checkpoint::read_container(path);
  CHECK(back.meta == c.meta);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.find("a").shape == a.shape());
  CHECK(back.find("a").data == a.values());
  CHECK(back.find("b").data == b.values());
  CHECK_FALSE(back.contains("c"));
  std::remove(path.c_str());
}

TEST_CASE("corrupted files and version drift are refused") {
  checkpoint::Container c;
  c.meta = {{"kind", "test"}};
  c.tensors.push_back({"t", {2}, {1.0, 2.0}});
  const std::string path = "test_corrupt.bin";
  checkpoint::write_container(path, c);

  // Flip one payload byte: the checksum must catch it.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(20);
    char x;
    f.seekg(20);
    f.read(&x, 1);
    x = static_cast<char>(x ^ 0x5A);
    f.seekp(20);
    f.write(&x, 1);
  }
  CHECK_THROWS_AS(checkpoint::read_container(path), IoError);
  std::remove(path.c_str());
}

TEST_CASE("backbone fixture round-trip reproduces forwards bitwise") {
  Vocab vocab = Vocab::standard();
  ModelConfig cfg;
  cfg.vocab = vocab.base_size();
  cfg.d = 16;
  cfg.heads = 2;
  cfg.ff = 32;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.bottleneck = 4;
  RngStream rng(11);
  Backbone bb = Backbone::init(cfg, rng);
  bb.set_trainable(false);

  const std::string path = "test_backbone.bin";
  checkpoint::save_backbone(path, bb, vocab);
  auto [loaded, vocab2] = checkpoint::load_backbone(path);
  CHECK(vocab2.words() == vocab.words());

  ModelState m1, m2;
  m1.backbone = std::shared_ptr<const Backbone>(&bb, [](const Backbone*) {});
  m1.vocab = std::make_shared<const Vocab>(vocab);
  m2.backbone = std::shared_ptr<const Backbone>(&loaded, [](const Backbone*) {});
  m2.vocab = std::make_shared<const Vocab>(vocab2);

  const std::vector<std::vector<int>> enc = {vocab.tokenize("the film was great"),
                                             vocab.tokenize("bad soup")};
  const std::vector<std::vector<int>> dec = {{Vocab::kA, vocab.id("positive")}, {Vocab::kA}};
  auto f1 = seq2seq_forward(m1, -1, enc, dec, 0.0, nullptr);
  auto f2 = seq2seq_forward(m2, -1, enc, dec, 0.0, nullptr);
  CHECK(f1.logits.values() == f2.logits.values());

  CHECK(checkpoint::file_hash(path) == checkpoint::file_hash(path));
  std::remove(path.c_str());
}
