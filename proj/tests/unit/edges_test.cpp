#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "forge/edges.hpp"
#include "forge/error.hpp"
#include "test_helpers.hpp"

using namespace forge;
using testutil::txo;

namespace {

ResolvedTransaction make_tx(std::vector<ResolvedTxo> in, std::vector<ResolvedTxo> out, std::uint64_t block = 1) {
  ResolvedTransaction tx;
  tx.inputs = std::move(in);
  tx.outputs = std::move(out);
  tx.block_height = block;
  return tx;
}

ResolvedTransaction random_tx(Rng& rng) {
  ResolvedTransaction tx;
  tx.block_height = rng.below(1000);
  auto n_in = 1 + rng.below(6);
  std::uint64_t total_in = 0;
  for (std::uint64_t i = 0; i < n_in; ++i) {
    auto v = 1 + rng.below(5'000'000'000ULL);
    total_in += v;
    auto a = rng.below(8);
    tx.inputs.push_back(txo(v, a, static_cast<ScriptSlot>(a * 4 + rng.below(3))));
  }
  std::uint64_t budget = total_in - rng.below(total_in / 10 + 1);  // fee up to ~10%
  auto n_out = 1 + rng.below(6);
  for (std::uint64_t i = 0; i < n_out && budget > 0; ++i) {
    auto v = i + 1 == n_out ? budget : 1 + rng.below(budget);
    budget -= v;
    auto a = rng.below(12);
    tx.outputs.push_back(txo(v, a, static_cast<ScriptSlot>(a * 4 + rng.below(3))));
  }
  return tx;
}

}  // namespace

TEST(NetValue, Examples) {
  auto tx = make_tx({txo(10, 1), txo(5, 2)}, {txo(7, 3), txo(2, 2), txo(5, 1)});
  EXPECT_EQ(net_value(tx, 3), 7);
  EXPECT_EQ(net_value(tx, 2), -3);
  EXPECT_EQ(net_value(tx, 1), -5);
  auto self = make_tx({txo(4, 9)}, {txo(4, 9)});
  EXPECT_EQ(net_value(self, 9), 0);
}

TEST(NetValue, AbsentAlias) {
  auto tx = make_tx({txo(10, 1)}, {txo(9, 2)});
  try {
    net_value(tx, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AliasAbsent);
  }
}

TEST(Attribution, ProportionalToGrossInput) {
  // senders put in 6 and 4, one recipient nets +8, fee 2
  auto tx = make_tx({txo(6, 1), txo(4, 2)}, {txo(8, 3)});
  auto ev = attribute_transfers(tx);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].sender, 1u);
  EXPECT_EQ(ev[0].recipient, 3u);
  EXPECT_DOUBLE_EQ(ev[0].value, 4.8);
  EXPECT_EQ(ev[1].sender, 2u);
  EXPECT_DOUBLE_EQ(ev[1].value, 3.2);
  EXPECT_EQ(ev[0].block, 1u);
}

TEST(Attribution, SingleSenderTwoRecipients) {
  auto tx = make_tx({txo(6, 1)}, {txo(3, 2), txo(2, 3)});
  auto ev = attribute_transfers(tx);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_DOUBLE_EQ(ev[0].value, 3.0);
  EXPECT_DOUBLE_EQ(ev[1].value, 2.0);
}

TEST(Attribution, CoinbaseHasNoEvents) {
  ResolvedTransaction tx;
  tx.is_coinbase = true;
  tx.outputs = {txo(50, 1)};
  EXPECT_TRUE(attribute_transfers(tx).empty());
  EXPECT_TRUE(attribute_script_transfers(tx).empty());
}

TEST(Attribution, ChangeBackToSenderIsNetted) {
  // alias 1 pays 10, gets 3 back as change: net -7
  auto tx = make_tx({txo(10, 1)}, {txo(6, 2), txo(3, 1)});
  auto ev = attribute_transfers(tx);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].recipient, 2u);
  EXPECT_DOUBLE_EQ(ev[0].value, 6.0);
}

TEST(Attribution, ZeroNetAliasTakesNoPart) {
  auto tx = make_tx({txo(10, 1), txo(5, 2)}, {txo(5, 2), txo(9, 3)});
  auto ev = attribute_transfers(tx);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].sender, 1u);
  EXPECT_EQ(ev[0].recipient, 3u);
  EXPECT_DOUBLE_EQ(ev[0].value, 9.0);
}

TEST(Attribution, ScriptLevelUsesSlots) {
  // one alias, two scripts: slot 0 pays slot 1
  auto tx = make_tx({txo(10, 0, 0)}, {txo(9, 0, 1)});
  EXPECT_TRUE(attribute_transfers(tx).empty());
  auto st = attribute_script_transfers(tx);
  ASSERT_EQ(st.size(), 1u);
  EXPECT_EQ(st[0].sender, 0u);
  EXPECT_EQ(st[0].recipient, 1u);
  EXPECT_DOUBLE_EQ(st[0].value, 9.0);
}

TEST(Aggregate, TwoEventsOnePair) {
  std::vector<TransferEvent> ev{{1, 2, 5.0, 10}, {1, 2, 7.0, 20}};
  auto edges = aggregate_edges(ev);
  ASSERT_EQ(edges.size(), 1u);
  EXPECT_EQ(edges[0], (EdgeRecord{1, 2, 10, 20, 2, 5.0, 7.0, 12.0}));
}

TEST(Aggregate, SingleEvent) {
  std::vector<TransferEvent> ev{{4, 3, 2.5, 7}};
  auto e = aggregate_edges(ev).at(0);
  EXPECT_EQ(e.reveal, e.last_seen);
  EXPECT_EQ(e.min_sent, e.max_sent);
  EXPECT_EQ(e.max_sent, e.total_sent);
  EXPECT_EQ(e.a, 4u);
  EXPECT_EQ(e.b, 3u);
}

TEST(Aggregate, NoEventsNoRows) {
  EXPECT_TRUE(aggregate_edges({}).empty());
  std::vector<TransferEvent> ev{{1, 2, 1.0, 1}};
  auto edges = aggregate_edges(ev);
  EXPECT_EQ(edges.size(), 1u);  // no (2,1) row
}

TEST(EdgeCsv, RoundTripAndHeader) {
  std::vector<TransferEvent> ev{{1, 2, 5.0, 10}, {1, 2, 0.1, 20}, {0, 3, 1e15 / 3.0, 4}};
  auto edges = aggregate_edges(ev);
  std::stringstream ss;
  write_edges_csv(ss, edges);
  auto text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), kEdgeCsvHeader);
  auto back = read_edges_csv(ss);
  ASSERT_EQ(back.size(), edges.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].a, edges[i].a);
    EXPECT_EQ(back[i].total, edges[i].total);
    EXPECT_NEAR(back[i].total_sent, edges[i].total_sent, 1e-15 * edges[i].total_sent);
  }
  // text form is a fixpoint after one pass
  std::stringstream again;
  write_edges_csv(again, back);
  EXPECT_EQ(again.str(), text);
}

TEST(EdgeCsv, WrongHeaderRejected) {
  std::stringstream ss("a,b,reveal,last_seen,total,min_sent,max_sent\n1,2,3,4,5,6,7\n");
  try {
    read_edges_csv(ss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaMismatch);
  }
}

TEST(EdgeCsv, BadCellRejected) {
  std::stringstream ss(std::string(kEdgeCsvHeader) + "\n1,2,x,4,5,6,7,8\n");
  try {
    read_edges_csv(ss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRow);
  }
}

TEST(EdgesProperty, ConservationBoundsAndDirection) {
  Rng rng(42);
  for (int i = 0; i < 2000; ++i) {
    auto tx = random_tx(rng);
    auto ev = attribute_transfers(tx);
    std::map<Alias, double> received, sent;
    for (const auto& e : ev) {
      EXPECT_GT(e.value, 0.0);
      EXPECT_EQ(e.block, tx.block_height);
      received[e.recipient] += e.value;
      sent[e.sender] += e.value;
    }
    std::set<Alias> aliases;
    for (const auto& t : tx.inputs) aliases.insert(t.alias);
    for (const auto& t : tx.outputs) aliases.insert(t.alias);
    for (auto a : aliases) {
      auto net = net_value(tx, a);
      EXPECT_FALSE(received.count(a) && sent.count(a));
      if (net > 0) {
        EXPECT_NEAR(received[a], static_cast<double>(net), 1e-9 * static_cast<double>(net));
      } else {
        EXPECT_EQ(received.count(a), 0u);
      }
      if (net >= 0) EXPECT_EQ(sent.count(a), 0u);
      if (sent.count(a)) {
        std::uint64_t gross = 0;
        for (const auto& t : tx.inputs)
          if (t.alias == a) gross += t.value;
        EXPECT_LE(sent[a], static_cast<double>(gross) * (1 + 1e-12));
      }
    }
    // events sorted by sender then recipient
    EXPECT_TRUE(std::is_sorted(ev.begin(), ev.end(), [](const auto& x, const auto& y) {
      return std::tie(x.sender, x.recipient) < std::tie(y.sender, y.recipient);
    }));
  }
}

TEST(EdgesProperty, MergeIsCommutative) {
  Rng rng(11);
  std::vector<TransferEvent> ev;
  for (int i = 0; i < 3000; ++i) {
    ev.push_back({rng.below(20), rng.below(20), static_cast<double>(1 + rng.below(1000)), rng.below(500)});
  }
  auto whole = aggregate_edges(ev);
  // partition in different ways and merge in different orders
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<EdgeAggregator> parts(1 + rng.below(6));
    for (const auto& e : ev) parts[rng.below(parts.size())].add(e);
    EdgeAggregator fwd, bwd;
    for (const auto& p : parts) fwd.merge(p);
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) bwd.merge(*it);
    auto a = fwd.finish(), b = bwd.finish();
    ASSERT_EQ(a.size(), whole.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].a, whole[i].a);
      EXPECT_EQ(a[i].b, whole[i].b);
      EXPECT_EQ(a[i].total, whole[i].total);
      EXPECT_EQ(a[i].reveal, whole[i].reveal);
      EXPECT_EQ(a[i].last_seen, whole[i].last_seen);
      EXPECT_EQ(a[i].min_sent, whole[i].min_sent);
      EXPECT_EQ(a[i].max_sent, whole[i].max_sent);
      // integer-valued sums are exact in any order
      EXPECT_EQ(a[i].total_sent, whole[i].total_sent);
      EXPECT_EQ(b[i], a[i]);
    }
  }
}
