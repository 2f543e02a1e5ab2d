#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "edgesim/kv/load_balancer.hpp"
#include "edgesim/kv/server.hpp"
#include "edgesim/kv/types.hpp"
#include "edgesim/kv/wire.hpp"
#include "edgesim/network.hpp"
#include "edgesim/transport.hpp"
#include "support/dc_fixture.hpp"

using namespace edgesim;
using edgesim::testing::Client;
using edgesim::testing::Dc;


TEST_CASE("version tags order by counter then writer id, zero below all") {
  using kv::Tag;
  CHECK(Tag{1, 0} > Tag::zero());
  CHECK(Tag{0, 1} > Tag::zero());
  const std::vector<Tag> tags = {{1, 10}, {2, 20}, {2, 10}};
  CHECK(*std::max_element(tags.begin(), tags.end()) == Tag{2, 20});
  CHECK(Tag{3, 1} > Tag{2, 99});
  CHECK(Tag{2, 2} > Tag{2, 1});
  CHECK(Tag{2, 1} == Tag{2, 1});
}

TEST_CASE("every read quorum meets every write quorum in exactly one server") {
  std::vector<NodeId> ids(9);
  for (NodeId i = 0; i < 9; ++i) ids[i] = i + 100;
  kv::QuorumSystem q(ids, 3, 3);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      auto rq = q.read_quorum(r);
      auto wq = q.write_quorum(c);
      int common = 0;
      for (NodeId a : rq) common += std::count(wq.begin(), wq.end(), a);
      CHECK(common == 1);
    }
  }
  CHECK_THROWS_AS(kv::QuorumSystem(ids, 2, 4), std::invalid_argument);
  CHECK_THROWS_AS(kv::QuorumSystem(ids, 0, 9), std::invalid_argument);
}

TEST_CASE("wire encoding round-trips through arbitrarily chunked streams") {
  std::mt19937_64 gen(42);
  auto rand_bytes = [&](std::size_t max_len) {
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<int> byte(0, 255);
    std::string s(len(gen), '\0');
    for (char& c : s) c = char(byte(gen));
    return s;
  };

  std::vector<kv::Request> reqs;
  std::vector<kv::Response> resps;
  std::string req_stream, resp_stream;
  for (int i = 0; i < 200; ++i) {
    kv::Request req;
    req.kind = gen() & 1 ? kv::RequestKind::kPut : kv::RequestKind::kGet;
    req.critical = gen() & 1;
    req.key = rand_bytes(40);
    req.value = rand_bytes(3000);
    req.request_id = gen();
    req_stream += req.encode();
    reqs.push_back(std::move(req));

    kv::Response resp;
    resp.kind = gen() & 1 ? kv::RequestKind::kPut : kv::RequestKind::kGet;
    resp.status = gen() & 1 ? kv::Status::kUnavailable : kv::Status::kOk;
    resp.value = rand_bytes(3000);
    resp.request_id = gen();
    resp.tag = {gen(), std::uint32_t(gen())};
    resp_stream += resp.encode();
    resps.push_back(std::move(resp));
  }

  kv::RequestDecoder rd;
  kv::ResponseDecoder pd;
  std::vector<kv::Request> got_reqs;
  std::vector<kv::Response> got_resps;
  std::uniform_int_distribution<std::size_t> chunk(1, 700);
  for (std::size_t off = 0; off < req_stream.size();) {
    std::size_t n = std::min(chunk(gen), req_stream.size() - off);
    for (auto& r : rd.feed(std::string_view(req_stream).substr(off, n)))
      got_reqs.push_back(std::move(r));
    off += n;
  }
  for (std::size_t off = 0; off < resp_stream.size();) {
    std::size_t n = std::min(chunk(gen), resp_stream.size() - off);
    for (auto& r : pd.feed(std::string_view(resp_stream).substr(off, n)))
      got_resps.push_back(std::move(r));
    off += n;
  }

  REQUIRE(got_reqs.size() == reqs.size());
  REQUIRE(got_resps.size() == resps.size());
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    CHECK(got_reqs[i].kind == reqs[i].kind);
    CHECK(got_reqs[i].critical == reqs[i].critical);
    CHECK(got_reqs[i].key == reqs[i].key);
    CHECK(got_reqs[i].value == reqs[i].value);
    CHECK(got_reqs[i].request_id == reqs[i].request_id);
    CHECK(got_resps[i].kind == resps[i].kind);
    CHECK(got_resps[i].status == resps[i].status);
    CHECK(got_resps[i].value == resps[i].value);
    CHECK(got_resps[i].request_id == resps[i].request_id);
    CHECK(got_resps[i].tag == resps[i].tag);
  }
}

TEST_CASE("a replica store keeps the highest tag under any arrival order") {
  Dc dc;
  kv::KvServer& s = *dc.srv[0];
  struct W {
    kv::Tag tag;
    std::string value;
  };
  std::vector<W> writes = {{{1, 7}, "a"}, {{3, 7}, "c"}, {{2, 7}, "b"}};
  std::sort(writes.begin(), writes.end(),
            [](const W& x, const W& y) { return x.tag < y.tag; });
  int perm = 0;
  do {
    const std::string key = "perm" + std::to_string(perm++);
    for (const W& w : writes) s.preload(key, w.value, w.tag);
    REQUIRE(s.store().count(key) == 1);
    CHECK(s.store().at(key).value == "c");
    CHECK(s.stored_tag(key) == kv::Tag{3, 7});
  } while (std::next_permutation(writes.begin(), writes.end(), [](const W& x, const W& y) {
    return x.tag < y.tag;
  }));
  CHECK(perm == 6);

  // Idempotent re-apply and stale writes leave the store unchanged.
  s.preload("k", "new", {3, 7});
  s.preload("k", "new", {3, 7});
  s.preload("k", "old", {2, 9});
  CHECK(s.store().at("k").value == "new");
  CHECK(s.stored_tag("k") == kv::Tag{3, 7});
}

TEST_CASE("first put takes counter 1 tagged with the writer, get sees it") {
  Dc dc;
  Client c(dc, "client");
  c.open();
  auto put_id = c.put("alpha", "v1");
  dc.eng.run_until(sec(2));

  const kv::Response* put = c.response(put_id);
  REQUIRE(put != nullptr);
  CHECK(put->status == kv::Status::kOk);
  CHECK(put->tag == kv::Tag{1, c.host.id()});

  auto get_id = c.get("alpha");
  dc.eng.run_until(sec(4));
  const kv::Response* get = c.response(get_id);
  REQUIRE(get != nullptr);
  CHECK(get->status == kv::Status::kOk);
  CHECK(get->value == "v1");
  CHECK(get->tag == kv::Tag{1, c.host.id()});

  // Phase 2 propagated the pair to a full write quorum (a grid column).
  int holders = 0;
  for (auto* s : dc.srv) holders += s->stored_tag("alpha") == put->tag;
  CHECK(holders >= 3);
  bool column_holds = false;
  for (int col = 0; col < dc.grid->cols(); ++col) {
    bool all = true;
    for (NodeId n : dc.grid->write_quorum(col)) {
      all = all && dc.server_by_id(n)->stored_tag("alpha") == put->tag;
    }
    column_holds = column_holds || all;
  }
  CHECK(column_holds);
}

TEST_CASE("get of an absent key returns an empty value and the zero tag") {
  Dc dc;
  Client c(dc, "client");
  c.open();
  auto id = c.get("missing");
  dc.eng.run_until(sec(2));
  const kv::Response* r = c.response(id);
  REQUIRE(r != nullptr);
  CHECK(r->status == kv::Status::kOk);
  CHECK(r->value.empty());
  CHECK(r->tag == kv::Tag::zero());
  for (auto* s : dc.srv) CHECK(s->store().count("missing") == 0);
}

TEST_CASE("requests on one connection are answered serially in order") {
  Dc dc;
  Client c(dc, "client");
  c.open();
  auto p1 = c.put("k", "one");
  auto p2 = c.put("k", "two");
  auto g = c.get("k");
  dc.eng.run_until(sec(2));
  REQUIRE(c.response(p1));
  REQUIRE(c.response(p2));
  REQUIRE(c.response(g));
  CHECK(c.response(p1)->tag == kv::Tag{1, c.host.id()});
  CHECK(c.response(p2)->tag == kv::Tag{2, c.host.id()});
  CHECK(c.response(g)->value == "two");
  CHECK(c.response(g)->tag == kv::Tag{2, c.host.id()});
}

TEST_CASE("round-robin assignment cycles the backends and skips dead ones") {
  Dc dc;
  for (int lap = 0; lap < 2; ++lap) {
    for (int i = 0; i < 9; ++i) CHECK(dc.lb->pick_server() == dc.srv[i]->id());
  }
  for (int i = 0; i < 9; ++i) {
    if (i != 4) dc.lb->mark_down(dc.srv[i]->id());
  }
  for (int i = 0; i < 5; ++i) CHECK(dc.lb->pick_server() == dc.srv[4]->id());
  dc.lb->mark_down(dc.srv[4]->id());
  CHECK(dc.lb->pick_server() == kNoNode);
  CHECK_FALSE(dc.lb->any_alive());
}

TEST_CASE("any single server crash leaves committed data readable") {
  for (int dead = 0; dead < 9; ++dead) {
    Dc dc;
    Client writer(dc, "writer");
    writer.open();
    auto put_id = writer.put("key", "payload");
    dc.eng.run_until(sec(2));
    REQUIRE(writer.response(put_id));
    REQUIRE(writer.response(put_id)->status == kv::Status::kOk);
    const kv::Tag put_tag = writer.response(put_id)->tag;

    dc.srv[dead]->kill();
    dc.lb->mark_down(dc.srv[dead]->id());

    Client reader(dc, "reader");
    reader.open();
    auto get_id = reader.get("key");
    dc.eng.run_until(sec(6));
    const kv::Response* r = reader.response(get_id);
    REQUIRE(r != nullptr);
    CHECK(r->status == kv::Status::kOk);
    CHECK(r->value == "payload");
    CHECK(r->tag == put_tag);
  }
}

TEST_CASE("a fully dead write quorum makes the store unavailable") {
  Dc dc;
  // Killing one whole column leaves no read quorum fully alive.
  for (NodeId n : dc.grid->write_quorum(1)) {
    dc.server_by_id(n)->kill();
    dc.lb->mark_down(n);
  }
  Client c(dc, "client");
  c.open();
  auto id = c.put("k", "v");
  dc.eng.run_until(sec(10));
  const kv::Response* r = c.response(id);
  REQUIRE(r != nullptr);
  CHECK(r->status == kv::Status::kUnavailable);
}

TEST_CASE("concurrent puts to one key resolve to a single deterministic winner") {
  Dc dc;
  Client a(dc, "alice");
  Client b(dc, "bob");
  a.open();
  b.open();
  auto pa = a.put("shared", "from_a");
  auto pb = b.put("shared", "from_b");
  dc.eng.run_until(sec(2));
  REQUIRE(a.response(pa));
  REQUIRE(b.response(pb));
  const kv::Tag ta = a.response(pa)->tag;
  const kv::Tag tb = b.response(pb)->tag;
  CHECK(ta != tb);

  Client r(dc, "reader");
  r.open();
  auto g = r.get("shared");
  dc.eng.run_until(sec(4));
  REQUIRE(r.response(g));
  const kv::Tag winner = std::max(ta, tb);
  CHECK(r.response(g)->tag == winner);
  CHECK(r.response(g)->value == (winner == ta ? "from_a" : "from_b"));
}
