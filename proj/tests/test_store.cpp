// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/archive.hpp"
#include "modalprompt/errors.hpp"
#include "modalprompt/prompt_store.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace modalprompt;
namespace fs = std::filesystem;

namespace {

PromptStore three_tasks() {
  PromptStore store({4, 8, 6}, 17);
  for (int t = 1; t <= 3; ++t) {
    store.add_task(t, 100 + t);
    store.mutable_set(t).embeddings.array() += 0.1 * t;
    store.finalize_task(t);
  }
  return store;
}

}  // namespace

TEST_CASE("sets freeze in order") {
  PromptStore store({4, 8, 6}, 17);
  CHECK(store.trainable_task() == 0);
  CHECK_THROWS_AS(store.add_task(2, 1), OrderingError);
  store.add_task(1, 1);
  CHECK(store.trainable_task() == 1);
  CHECK(store.set(1).embeddings.rows() == 4);
  CHECK(store.set(1).embeddings.cols() == 8);
  CHECK_NOTHROW(store.mutable_set(1));
  CHECK_THROWS_AS(store.add_task(2, 2), StateError);
  store.finalize_task(1);
  store.add_task(2, 2);
  CHECK(store.set(1).frozen);
  CHECK_THROWS_AS(store.mutable_set(1), StateError);
  store.finalize_task(2);
  CHECK_THROWS_AS(store.mutable_set(2), StateError);
  CHECK_THROWS_AS(store.finalize_task(2), StateError);
  CHECK_THROWS_AS(store.set(3), LookupError);
  CHECK(store.cached_prototypes().size() == 2);
}

TEST_CASE("cached prototypes are unit vectors from the head") {
  const PromptStore store = three_tasks();
  for (int t = 1; t <= 3; ++t) {
    const auto& p = store.cached_prototype(t);
    CHECK(p.dim() == 6);
    CHECK(p.values().norm() == doctest::Approx(1.0));
    const auto again = project_prototype(store.head(), store.set(t));
    CHECK((again.values() - p.values()).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("prompt token ids extend the base vocabulary") {
  const PromptStore store = three_tasks();
  const int V = 50;
  CHECK(store.token_id(1, 0, V) == V);
  CHECK(store.token_id(2, 3, V) == V + 4 + 3);
  CHECK(store.token_id(3, 0, V) == V + 8);
  CHECK_THROWS_AS(store.token_id(1, 4, V), LookupError);
  const Matrix stacked = store.stacked_embeddings();
  CHECK(stacked.rows() == 12);
  CHECK(stacked.row(store.token_id(2, 1, V) - V) == store.set(2).embeddings.row(1));
}

TEST_CASE("store archives are byte-identical across save and load") {
  const PromptStore store = three_tasks();
  const fs::path path = fs::temp_directory_path() / "mp-store-test.store";
  store.save(path);
  const PromptStore back = PromptStore::load(path, StoreShape{4, 8, 6});
  CHECK(serialize(back.to_archive()) == serialize(store.to_archive()));
  for (int t = 1; t <= 3; ++t) {
    CHECK(matrix_bytes(back.set(t).embeddings) == matrix_bytes(store.set(t).embeddings));
    CHECK(back.set(t).frozen);
  }
  CHECK_THROWS_AS(PromptStore::load(path, StoreShape{5, 8, 6}), ShapeError);
  CHECK_THROWS_AS(PromptStore::load(path, StoreShape{4, 16, 6}), ShapeError);

  // Flip one byte in the tensor payload.
  std::string bytes = serialize(store.to_archive());
  bytes[bytes.size() - 20] ^= 0x1;
  CHECK_THROWS_AS(deserialize(bytes), IntegrityError);
  CHECK_THROWS_AS(deserialize(bytes.substr(0, 10)), IntegrityError);
  CHECK_THROWS_AS(deserialize("XXXX"), IntegrityError);
  fs::remove(path);
  fs::remove(fs::path(path.string() + ".txt"));
}

TEST_CASE("archives reject the wrong kind and shapes") {
  Archive a;
  a.metadata["kind"] = "something else";
  a.add("x", Matrix::Zero(2, 3));
  CHECK_THROWS_AS(PromptStore::from_archive(a), IntegrityError);
  CHECK_THROWS_AS(a.tensor("y"), IntegrityError);
  CHECK_THROWS_AS(a.tensor("x", 3, 2), ShapeError);
  CHECK(deserialize(serialize(a)).tensor("x").rows() == 2);
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
}

TEST_CASE("head freezes with the store shape checks") {
  PrototypeHead head = PrototypeHead::initialize(8, 4, 1);
  CHECK(head.d_model() == 8);
  CHECK(head.d_guidance() == 4);
  PromptSet wrong{1, Matrix::Ones(2, 5), true};
  CHECK_THROWS_AS(project_prototype(head, wrong), ShapeError);
  head.trainable = false;
  CHECK_THROWS_AS(head.assign(head.leaves()), StateError);
  CHECK_THROWS_AS(PromptStore({0, 8, 4}, 1), ConfigError);
}
