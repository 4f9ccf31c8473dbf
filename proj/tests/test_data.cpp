#include <numeric>

#include "doctest.h"
#include "helpers.hpp"

#include "cave/data.hpp"
#include "cave/error.hpp"
#include "cave/features.hpp"

using namespace cave;

TEST_SUITE("core-data") {

TEST_CASE("user row parses into profile fields") {
  const auto u = parse_user_row("7,1,3,12");
  CHECK(u.user_id == 7);
  CHECK(u.gender == 1);
  CHECK(u.age_level == 3);
  CHECK(u.user_tag == 12);
}

TEST_CASE("categoricals outside schema ranges are rejected") {
  CHECK_THROWS_AS(parse_item_row("5,1,2,3000,4,100"), RangeError);
  CHECK_NOTHROW(parse_item_row("5,1,2,2919,4,100"));
  CHECK_THROWS_AS(parse_user_row("1,3,0,0"), RangeError);
  CHECK_THROWS_AS(parse_user_row("1,0,8,0"), RangeError);
  CHECK_THROWS_AS(parse_user_row("1,0,0,27"), RangeError);
  CHECK_THROWS_AS(parse_item_row("5,1,2,3,4,-1"), RangeError);
}

TEST_CASE("malformed rows report their line") {
  const auto dir = testing::scratch_dir("malformed");
  testing::write_file(dir / "users.csv", "user_id,gender,age_level,user_tag\n1,0,0,0\n2,x,0,0\n");
  testing::write_file(dir / "items.csv", "item_id,cat_1,cat_2,cat_3,cat_4,duration\n");
  testing::write_file(dir / "requests.jsonl", "");
  try {
    load_dataset_dir(dir);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("bad request json reports its line") {
  const auto dir = testing::scratch_dir("badjson");
  testing::write_file(dir / "users.csv", "user_id,gender,age_level,user_tag\n1,0,0,0\n");
  testing::write_file(dir / "items.csv", "item_id,cat_1,cat_2,cat_3,cat_4,duration\n1,0,0,0,0,5\n");
  testing::write_file(dir / "requests.jsonl",
                      "{\"session_id\":1,\"request_id\":1,\"user_id\":1,\"item_id_list\":[1],"
                      "\"label_completion\":[0.5]}\n{not json\n");
  try {
    load_dataset_dir(dir);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("dangling item id is an integrity error") {
  const auto dir = testing::scratch_dir("dangling");
  testing::write_file(dir / "users.csv", "user_id,gender,age_level,user_tag\n1,0,0,0\n");
  testing::write_file(dir / "items.csv", "item_id,cat_1,cat_2,cat_3,cat_4,duration\n1,0,0,0,0,5\n");
  testing::write_file(dir / "requests.jsonl",
                      "{\"session_id\":1,\"request_id\":1,\"user_id\":1,\"item_id_list\":[1,9],"
                      "\"label_completion\":[0.5,0.1]}\n");
  CHECK_THROWS_AS(load_dataset_dir(dir), IntegrityError);
}

TEST_CASE("empty request file gives an empty dataset with a warning") {
  const auto dir = testing::scratch_dir("empty");
  testing::write_file(dir / "users.csv", "user_id,gender,age_level,user_tag\n1,0,0,0\n");
  testing::write_file(dir / "items.csv", "item_id,cat_1,cat_2,cat_3,cat_4,duration\n");
  testing::write_file(dir / "requests.jsonl", "");
  const auto d = load_dataset_dir(dir);
  CHECK(d.num_sessions() == 0);
  CHECK(d.warnings.size() == 1);
}

TEST_CASE("request lists must align and stay within six items") {
  auto r = testing::make_request(1, 1, 1, {1, 2, 3});
  CHECK_NOTHROW(r.validate());
  r.label_positive.push_back(1.0);
  CHECK_THROWS(r.validate());
  auto big = testing::make_request(1, 1, 1, {1, 2, 3, 4, 5, 6, 7});
  CHECK_THROWS(big.validate());
  auto bad = testing::make_request(1, 1, 1, {1}, {1.5});
  CHECK_THROWS(bad.validate());
}

TEST_CASE("write then load reproduces the dataset") {
  auto d = testing::tiny_dataset(4, 10, 3, 5);
  d.histories[0].sessions[0].requests[0].exit_position = 1;
  const auto dir = testing::scratch_dir("roundtrip");
  write_dataset(d, dir);
  const auto back = load_dataset_dir(dir);
  REQUIRE(back.histories.size() == d.histories.size());
  for (std::size_t u = 0; u < d.histories.size(); ++u) {
    REQUIRE(back.histories[u].sessions.size() == d.histories[u].sessions.size());
    for (std::size_t s = 0; s < d.histories[u].sessions.size(); ++s) {
      CHECK(back.histories[u].sessions[s].requests == d.histories[u].sessions[s].requests);
    }
  }
  CHECK(back.users->rows() == d.users->rows());
  CHECK(back.items->rows() == d.items->rows());
}

std::vector<ConsumedItem> consumed(int n) {
  std::vector<ConsumedItem> v(n);
  for (int i = 0; i < n; ++i) {
    v[i].item_id = 100 + i;
    v[i].completion = 0.01 * i;
  }
  return v;
}

TEST_CASE("segmentation chunk sizes") {
  auto sizes = [](int n) {
    std::vector<std::size_t> out;
    for (const auto& r : segment_session(consumed(n))) out.push_back(r.size());
    return out;
  };
  CHECK(sizes(14) == std::vector<std::size_t>{6, 6, 2});
  CHECK(sizes(6) == std::vector<std::size_t>{6});
  CHECK_THROWS(segment_session(consumed(0)));
}

TEST_CASE("segmentation round-trips the item sequence") {
  for (int n = 1; n <= 40; ++n) {
    const auto in = consumed(n);
    std::vector<std::int64_t> ids;
    std::vector<double> labels;
    for (const auto& r : segment_session(in)) {
      CHECK(r.size() >= 1);
      CHECK(r.size() <= 6);
      ids.insert(ids.end(), r.items.begin(), r.items.end());
      labels.insert(labels.end(), r.label_completion.begin(), r.label_completion.end());
    }
    REQUIRE(ids.size() == in.size());
    for (int i = 0; i < n; ++i) {
      CHECK(ids[i] == in[i].item_id);
      CHECK(labels[i] == in[i].completion);
    }
  }
}

TEST_CASE("chronological split") {
  auto d = testing::tiny_dataset(3, 20, 3, 1);
  d.histories[1].sessions.resize(2);  // user 2 keeps two sessions
  auto& ten = d.histories[2].sessions;
  auto extra = testing::tiny_dataset(1, 20, 7, 2).histories[0].sessions;
  ten.insert(ten.end(), extra.begin(), extra.end());

  const auto sp = chronological_split(d);
  CHECK(sp.dropped_users == 1);
  REQUIRE(sp.train.histories.size() == 2);
  const auto& s1 = d.histories[0].sessions;
  CHECK(sp.train.histories[0].sessions.size() == 1);
  CHECK(sp.train.histories[0].sessions[0].session_id == s1[0].session_id);
  CHECK(sp.val.histories[0].sessions[0].session_id == s1[1].session_id);
  CHECK(sp.test.histories[0].sessions[0].session_id == s1[2].session_id);
  CHECK(sp.train.histories[1].sessions.size() == 8);

  for (std::size_t u = 0; u < 2; ++u) {
    const auto uid = sp.train.histories[u].user_id;
    std::vector<std::int64_t> all;
    for (const auto* part : {&sp.train, &sp.val, &sp.test}) {
      for (const auto& s : part->histories[u].sessions) all.push_back(s.session_id);
    }
    std::vector<std::int64_t> expect;
    for (const auto& h : d.histories) {
      if (h.user_id != uid) continue;
      for (const auto& s : h.sessions) expect.push_back(s.session_id);
    }
    CHECK(all == expect);
  }
}

TEST_CASE("split without eligible users fails") {
  auto d = testing::tiny_dataset(2, 5, 2, 1);
  CHECK_THROWS(chronological_split(d));
}

TEST_CASE("consumption label sums the chosen labels") {
  auto r = testing::make_request(1, 1, 1, {1, 2, 3}, {1.0, 0.5, 0.2});
  CHECK(consumption_label(r, LabelKind::kCompletion) == doctest::Approx(1.7).epsilon(1e-15));
  auto p = testing::make_request(1, 1, 1, {1, 2, 3, 4, 5, 6});
  p.label_positive = {0, 1, 0, 1, 0, 0};
  CHECK(consumption_label(p, LabelKind::kPositive) == 2.0);
  p.label_longview.clear();
  CHECK_THROWS(consumption_label(p, LabelKind::kLongview));
}

TEST_CASE("build_sequence shape, determinism and unknown ids") {
  const auto d = testing::tiny_dataset(3, 12, 3, 4);
  const auto vocab = FeatureVocab::build(d);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  std::vector<MatrixXd> tables;
  const int emb = 3;
  for (int s : vocab.table_sizes()) {
    tables.push_back(MatrixXd::NullaryExpr(s, emb, [&] { return n01(rng); }));
  }
  const auto& user = d.users->at(1);
  auto r = testing::make_request(1, 1, 1, {1, 2, 3, 4, 5, 6});
  const auto a = build_sequence(&user, r, *d.items, vocab, tables);
  const auto b = build_sequence(&user, r, *d.items, vocab, tables);
  CHECK(a.rows() == 6);
  CHECK(a.cols() == feature_dim(emb));
  CHECK((a.array() == b.array()).all());

  // An item id the vocabulary never saw falls back to row 0 of the id table.
  auto items = *d.items;
  items.insert({999, {1, 2, 3, 4}, 500.0});
  auto unseen = testing::make_request(1, 1, 1, {999});
  const auto s = build_sequence(&user, unseen, items, vocab, tables);
  const auto item_block = s.row(0).segment(kItemIdField * emb, emb);
  CHECK((item_block.array() == tables[kItemIdField].row(0).array()).all());
  // Explicit lookup oracle for the category blocks.
  for (int c = 0; c < 4; ++c) {
    const auto blk = s.row(0).segment((kCat1Field + c) * emb, emb);
    CHECK((blk.array() == tables[kCat1Field + c].row(c + 1).array()).all());
  }
  CHECK(s(0, kNumFields * emb) == doctest::Approx((500.0 - vocab.duration_mean) / vocab.duration_std));
}

TEST_CASE("vocabulary numbers ids in ascending order from 1") {
  const auto d = testing::tiny_dataset(5, 30, 3, 9);
  const auto v = FeatureVocab::build(d);
  const auto ids = v.sorted_item_ids();
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(v.item_row(ids[i]) == static_cast<int>(i + 1));
  CHECK(v.user_row(12345) == 0);
}

}  // TEST_SUITE
