// Copyright 2026 The qder Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "qder/model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace qder {

int EntityState::SegmentOf(EntityId id) {
  if (id < (EntityId{1} << kBaseBits)) return 0;
  return std::bit_width(id) - kBaseBits;
}

EntityId EntityState::SegmentStart(int segment) {
  return segment == 0 ? 0 : EntityId{1} << (kBaseBits + segment - 1);
}

std::size_t EntityState::SegmentSize(int segment) {
  return segment == 0 ? std::size_t{1} << kBaseBits
                      : std::size_t{1} << (kBaseBits + segment - 1);
}

EntityState::EntityState() = default;

EntityState::~EntityState() { Clear(); }

EntityState::EntityState(const EntityState& other) { CopyFrom(other); }

EntityState& EntityState::operator=(const EntityState& other) {
  if (this != &other) {
    Clear();
    CopyFrom(other);
  }
  return *this;
}

EntityState::EntityState(EntityState&& other) noexcept { *this = std::move(other); }

EntityState& EntityState::operator=(EntityState&& other) noexcept {
  if (this == &other) return *this;
  Clear();
  for (int s = 0; s < kNumSegments; ++s) {
    segments_[s].store(other.segments_[s].load());
    other.segments_[s].store(nullptr);
  }
  assignment_ = std::move(other.assignment_);
  member_pos_ = std::move(other.member_pos_);
  id_capacity_ = std::exchange(other.id_capacity_, 0);
  num_mentions_ = std::exchange(other.num_mentions_, 0);
  live_ = std::move(other.live_);
  other.live_.clear();
  next_id_.store(other.next_id_.exchange(0));
  return *this;
}

void EntityState::Clear() {
  for (auto& seg : segments_) {
    delete[] seg.exchange(nullptr);
  }
  assignment_.reset();
  member_pos_.clear();
  id_capacity_ = 0;
  num_mentions_ = 0;
  live_.clear();
  next_id_ = 0;
}

void EntityState::CopyFrom(const EntityState& other) {
  ResetMentions(other.id_capacity_);
  for (std::size_t i = 0; i < id_capacity_; ++i) {
    assignment_[i].store(other.assignment_[i].load(std::memory_order_relaxed),
                         std::memory_order_relaxed);
  }
  member_pos_ = other.member_pos_;
  num_mentions_ = other.num_mentions_;
  next_id_.store(other.next_id_.load());
  std::lock_guard<std::mutex> lock(other.live_mu_);
  live_ = other.live_;
  for (EntityId id : live_) {
    const Record& src = other.At(id);
    Record& dst = Create(id);
    dst.members = src.members;
    dst.version = src.version;
    dst.live = true;
    dst.live_pos = src.live_pos;
  }
}

void EntityState::ResetMentions(std::size_t id_capacity) {
  id_capacity_ = id_capacity;
  assignment_ = std::make_unique<std::atomic<EntityId>[]>(id_capacity);
  for (std::size_t i = 0; i < id_capacity; ++i) {
    assignment_[i].store(kNoEntity, std::memory_order_relaxed);
  }
  member_pos_.assign(id_capacity, 0);
}

EntityState::Record* EntityState::Find(EntityId id) const {
  if (id >= kFreshEntity) return nullptr;
  const int s = SegmentOf(id);
  Record* seg = segments_[s].load(std::memory_order_acquire);
  if (seg == nullptr) return nullptr;
  return &seg[id - SegmentStart(s)];
}

EntityState::Record& EntityState::At(EntityId id) const {
  Record* r = Find(id);
  if (r == nullptr) {
    throw ContractError("unknown entity id " + std::to_string(id));
  }
  return *r;
}

EntityState::Record& EntityState::Create(EntityId id) {
  const int s = SegmentOf(id);
  Record* seg = segments_[s].load(std::memory_order_acquire);
  if (seg == nullptr) {
    std::lock_guard<std::mutex> lock(segment_mu_);
    seg = segments_[s].load(std::memory_order_acquire);
    if (seg == nullptr) {
      seg = new Record[SegmentSize(s)];
      segments_[s].store(seg, std::memory_order_release);
    }
  }
  return seg[id - SegmentStart(s)];
}

void EntityState::AddLive(EntityId id, Record& rec) {
  std::lock_guard<std::mutex> lock(live_mu_);
  rec.live_pos = static_cast<std::uint32_t>(live_.size());
  live_.push_back(id);
}

void EntityState::RemoveLive(Record& rec) {
  std::lock_guard<std::mutex> lock(live_mu_);
  const std::uint32_t pos = rec.live_pos;
  const EntityId last = live_.back();
  live_[pos] = last;
  At(last).live_pos = pos;
  live_.pop_back();
}

EntityState EntityState::Singletons(std::span<const MentionId> ids) {
  std::map<EntityId, std::vector<MentionId>> entities;
  EntityId next = 0;
  for (MentionId m : ids) entities[next++] = {m};
  return FromEntities(entities);
}

EntityState EntityState::SingleCluster(std::span<const MentionId> ids) {
  std::map<EntityId, std::vector<MentionId>> entities;
  if (!ids.empty()) entities[0] = {ids.begin(), ids.end()};
  return FromEntities(entities);
}

EntityState EntityState::FromEntities(
    const std::map<EntityId, std::vector<MentionId>>& entities) {
  EntityState state;
  MentionId max_id = 0;
  bool any = false;
  for (const auto& [id, members] : entities) {
    if (id >= kFreshEntity) throw ContractError("entity id out of range");
    for (MentionId m : members) {
      max_id = std::max(max_id, m);
      any = true;
    }
  }
  state.ResetMentions(any ? std::size_t{max_id} + 1 : 0);
  EntityId next = 0;
  for (const auto& [id, members] : entities) {
    next = std::max(next, id + 1);
    if (members.empty()) continue;
    Record& rec = state.Create(id);
    rec.live = true;
    for (MentionId m : members) {
      if (state.assignment_[m].load() != kNoEntity) {
        throw ContractError("mention " + std::to_string(m) +
                            " assigned to two entities");
      }
      state.assignment_[m].store(id);
      state.member_pos_[m] = static_cast<std::uint32_t>(rec.members.size());
      rec.members.push_back(m);
      ++state.num_mentions_;
    }
    state.AddLive(id, rec);
  }
  state.next_id_ = next;
  return state;
}

std::size_t EntityState::num_entities() const {
  std::lock_guard<std::mutex> lock(live_mu_);
  return live_.size();
}

bool EntityState::Contains(MentionId m) const { return EntityOf(m) != kNoEntity; }

EntityId EntityState::EntityOf(MentionId m) const {
  if (m >= id_capacity_) return kNoEntity;
  return assignment_[m].load(std::memory_order_acquire);
}

bool EntityState::IsLive(EntityId e) const {
  const Record* r = Find(e);
  return r != nullptr && r->live;
}

std::span<const MentionId> EntityState::Members(EntityId e) const {
  const Record* r = Find(e);
  if (r == nullptr) return {};
  return r->members;
}

std::uint64_t EntityState::Version(EntityId e) const { return At(e).version; }

std::vector<EntityId> EntityState::Entities() const {
  std::vector<EntityId> out;
  {
    std::lock_guard<std::mutex> lock(live_mu_);
    out = live_;
  }
  std::sort(out.begin(), out.end());
  return out;
}

EntityId EntityState::RandomEntity(Rng& rng) const {
  std::lock_guard<std::mutex> lock(live_mu_);
  if (live_.empty()) throw ContractError("no entities to draw from");
  return live_[rng.UniformIndex(live_.size())];
}

EntityId EntityState::RandomEntityExcept(EntityId excluded, bool include_fresh,
                                         Rng& rng) const {
  std::lock_guard<std::mutex> lock(live_mu_);
  const Record* ex = Find(excluded);
  const bool skip = ex != nullptr && ex->live;
  const std::size_t choices =
      live_.size() - (skip ? 1 : 0) + (include_fresh ? 1 : 0);
  if (choices == 0) return kNoEntity;
  std::size_t k = rng.UniformIndex(choices);
  if (skip) {
    // Draw over the live list with the excluded slot removed.
    if (k >= ex->live_pos) ++k;
  }
  if (k >= live_.size()) return kFreshEntity;
  return live_[k];
}

MentionId EntityState::RandomMember(EntityId e, Rng& rng) const {
  const Record& r = At(e);
  if (r.members.empty()) throw ContractError("draw from an empty entity");
  return r.members[rng.UniformIndex(r.members.size())];
}

bool EntityState::IsNoOp(const Move& move) const {
  if (move.source == move.target) return true;
  const bool fresh =
      move.target == kFreshEntity || move.target == next_id_.load();
  return fresh && Size(move.source) == 1;
}

EntityId EntityState::Apply(const Move& move) {
  const MentionId m = move.mention;
  if (m >= id_capacity_ ||
      assignment_[m].load(std::memory_order_relaxed) != move.source) {
    throw ContractError("mention " + std::to_string(m) +
                        " is not in source entity " +
                        std::to_string(move.source));
  }
  Record& src = At(move.source);
  if (!src.live) throw ContractError("source entity is not live");
  if (move.source == move.target) return move.source;

  const bool fresh =
      move.target == kFreshEntity || move.target == next_id_.load();
  if (fresh && src.members.size() == 1) return move.source;

  Record* dst = nullptr;
  EntityId target = move.target;
  if (fresh) {
    target = next_id_.fetch_add(1);
    if (target >= kFreshEntity) throw ContractError("entity ids exhausted");
    dst = &Create(target);
    dst->members.clear();
    dst->version = 0;
    dst->live = true;
  } else {
    dst = Find(target);
    if (dst == nullptr || !dst->live) {
      throw ContractError("target entity " + std::to_string(target) +
                          " does not exist");
    }
  }

  // Swap-remove from the source.
  const std::uint32_t pos = member_pos_[m];
  const MentionId last = src.members.back();
  src.members[pos] = last;
  member_pos_[last] = pos;
  src.members.pop_back();
  ++src.version;

  member_pos_[m] = static_cast<std::uint32_t>(dst->members.size());
  dst->members.push_back(m);
  ++dst->version;
  assignment_[m].store(target, std::memory_order_release);

  if (fresh) AddLive(target, *dst);
  if (src.members.empty()) {
    src.live = false;
    src.members.shrink_to_fit();
    RemoveLive(src);
  }
  return target;
}

bool EntityState::TryLock(EntityId e) {
  Record* r = Find(e);
  if (r == nullptr) return false;
  bool expected = false;
  return r->locked.compare_exchange_strong(expected, true,
                                           std::memory_order_acquire);
}

void EntityState::Unlock(EntityId e) {
  At(e).locked.store(false, std::memory_order_release);
}

std::vector<std::vector<MentionId>> EntityState::Partition() const {
  std::vector<std::vector<MentionId>> out;
  for (EntityId e : Entities()) {
    auto members = Members(e);
    std::vector<MentionId> sorted(members.begin(), members.end());
    std::sort(sorted.begin(), sorted.end());
    out.push_back(std::move(sorted));
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool EntityState::CheckInvariants(std::string* why) const {
  auto fail = [&](const std::string& msg) {
    if (why != nullptr) *why = msg;
    return false;
  };
  std::vector<EntityId> live;
  {
    std::lock_guard<std::mutex> lock(live_mu_);
    live = live_;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const Record* r = Find(live[i]);
      if (r == nullptr || !r->live) return fail("dead entity in live list");
      if (r->live_pos != i) return fail("stale live position");
    }
  }
  std::set<EntityId> live_set(live.begin(), live.end());
  if (live_set.size() != live.size()) return fail("duplicate live entity");
  std::size_t counted = 0;
  for (EntityId e : live) {
    if (e >= next_id_.load()) return fail("entity id beyond allocator");
    const Record& r = At(e);
    if (r.members.empty()) return fail("empty live entity " + std::to_string(e));
    for (std::size_t i = 0; i < r.members.size(); ++i) {
      const MentionId m = r.members[i];
      if (m >= id_capacity_ || assignment_[m].load() != e) {
        return fail("mention " + std::to_string(m) + " not assigned to " +
                    std::to_string(e));
      }
      if (member_pos_[m] != i) return fail("stale member position");
    }
    counted += r.members.size();
  }
  std::size_t assigned = 0;
  for (std::size_t m = 0; m < id_capacity_; ++m) {
    const EntityId e = assignment_[m].load();
    if (e == kNoEntity) continue;
    ++assigned;
    if (live_set.count(e) == 0) return fail("mention assigned to dead entity");
  }
  if (assigned != counted || counted != num_mentions_) {
    return fail("partition is not exhaustive");
  }
  return true;
}

EntityState InitSingletons(std::span<const MentionId> ids) {
  return EntityState::Singletons(ids);
}

EntityState InitSingleCluster(std::span<const MentionId> ids) {
  return EntityState::SingleCluster(ids);
}

EntityState ApplyMove(const EntityState& state, const Move& move) {
  EntityState next = state;
  next.Apply(move);
  return next;
}

bool Accept(double delta, AcceptanceMode mode, Rng& rng) {
  if (mode == AcceptanceMode::kGreedy) return delta > 0.0;
  if (delta >= 0.0) return true;
  return rng.Uniform() < std::exp(delta);
}

void WriteStateJsonl(std::ostream& out, const EntityState& state) {
  for (EntityId e : state.Entities()) {
    auto members = state.Members(e);
    std::vector<MentionId> sorted(members.begin(), members.end());
    std::sort(sorted.begin(), sorted.end());
    nlohmann::ordered_json j;
    j["entity_id"] = e;
    j["members"] = sorted;
    out << j.dump() << '\n';
  }
}

EntityState ReadStateJsonl(std::istream& in) {
  std::map<EntityId, std::vector<MentionId>> entities;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      const auto id = j.at("entity_id").get<EntityId>();
      if (!entities.emplace(id, j.at("members").get<std::vector<MentionId>>())
               .second) {
        throw ParseError(lineno, "duplicate entity id");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return EntityState::FromEntities(entities);
}

}  // namespace qder
