#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "gate/store.hpp"
#include "support.hpp"

namespace gate {
namespace {

class StoreTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = std::filesystem::temp_directory_path() /
            ("gate-store-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(root_);
  }
  void TearDown() override { std::filesystem::remove_all(root_); }
  std::filesystem::path root_;
};

Session sample(std::uint64_t seed) {
  PolicySpec p;
  p.kind = PolicyKind::gate_yesno;
  Session s = make_session("email_validation", p, seed, 0, testing::at_s(0));
  s = issue_query(std::move(s), "Dots allowed?", QueryKind::yesno_question, std::nullopt, testing::at_s(1),
                  std::chrono::milliseconds(700));
  return append_answer(std::move(s), 0, "yes", testing::at_s(9));
}

TEST_F(StoreTest, RoundTripAndRevisions) {
  FileStore store(root_);
  const auto s = sample(1);
  EXPECT_EQ(save_session(store, s), 1);
  EXPECT_EQ(save_session(store, s), 2);
  EXPECT_EQ(load_session(store, s.id), s);
  EXPECT_EQ(store.get("sessions", s.id).at("revision"), 2);
  EXPECT_EQ(store.list("sessions"), std::vector<std::string>{s.id});
  EXPECT_TRUE(store.list("nothing").empty());
}

TEST_F(StoreTest, TruncatedFileIsCorruptAndOthersUnaffected) {
  FileStore store(root_);
  const auto a = sample(1), b = sample(2);
  save_session(store, a);
  save_session(store, b);
  const auto path = root_ / "sessions" / (a.id + ".json");
  const auto text = testing::read_text(path);
  std::ofstream(path, std::ios::trunc) << text.substr(0, text.size() / 2);
  try {
    load_session(store, a.id);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::corrupt_record);
  }
  EXPECT_EQ(load_session(store, b.id), b);
  // Overwriting a corrupt record restarts its revision count.
  EXPECT_EQ(save_session(store, a), 1);
}

TEST_F(StoreTest, FutureSchemaVersionIsRejected) {
  FileStore store(root_);
  nlohmann::json doc = sample(1);
  doc["schema_version"] = 99;
  store.put("sessions", "future", doc);
  try {
    load_session(store, "future");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::version_mismatch);
  }
}

TEST_F(StoreTest, RejectsBadKeysAndUnversionedDocuments) {
  FileStore store(root_);
  EXPECT_THROW(store.put("sessions", "../escape", {{"schema_version", 1}}), Error);
  EXPECT_THROW(store.put("sessions", "x", {{"a", 1}}), Error);
  try {
    store.get("sessions", "missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_found);
  }
}

TEST_F(StoreTest, ConcurrentWritesKeepRevisionsStrictlyIncreasing) {
  FileStore store(root_);
  std::vector<std::thread> threads;
  std::mutex mu;
  std::vector<int> revisions;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 25; ++i) {
        const int r = store.put("k", "same", {{"schema_version", 1}});
        std::lock_guard lock(mu);
        revisions.push_back(r);
      }
    });
  for (auto& t : threads) t.join();
  std::sort(revisions.begin(), revisions.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(revisions[i], i + 1);
  for (const auto& entry : std::filesystem::directory_iterator(root_ / "k"))
    EXPECT_EQ(entry.path().filename().string(), "same.json");
}

TEST_F(StoreTest, Predictions) {
  FileStore store(root_);
  const std::vector<PredictionRecord> rs = {{"s", "a", Cutoff::minutes(1), 0.5, "0.5"}};
  save_predictions(store, "s", rs);
  EXPECT_EQ(load_predictions(store, "s"), rs);
}

}  // namespace
}  // namespace gate
