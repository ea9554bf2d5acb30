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


#ifndef QDER_MODEL_H_
#define QDER_MODEL_H_

#include <array>
#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qder/corpus.h"
#include "qder/rng.h"

namespace qder {

using EntityId = std::uint32_t;

inline constexpr EntityId kNoEntity = std::numeric_limits<EntityId>::max();
// Move target meaning "a new, empty entity".
inline constexpr EntityId kFreshEntity = kNoEntity - 1;

// Raised when an operation is called outside its precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Move {
  MentionId mention = 0;
  EntityId source = kNoEntity;
  EntityId target = kNoEntity;

  bool operator==(const Move&) const = default;
};

// Partition of a set of mention ids into entities: the sampler state.
//
// Entity ids are never reused. Records live in segments that never move, so
// a reference obtained for an entity stays valid while other entities are
// created. This lets the parallel engine share one state: membership of an
// entity is read or written only while holding that entity's lock
// (TryLock/Unlock), the live-entity list has its own mutex, and the
// mention -> entity map is atomic. Single-threaded callers can ignore the
// locks entirely.
class EntityState {
 public:
  EntityState();
  ~EntityState();
  EntityState(const EntityState& other);
  EntityState& operator=(const EntityState& other);
  EntityState(EntityState&& other) noexcept;
  EntityState& operator=(EntityState&& other) noexcept;

  static EntityState Singletons(std::span<const MentionId> ids);
  static EntityState SingleCluster(std::span<const MentionId> ids);
  // Rebuilds a state with the given entity ids (e.g. from a dump).
  static EntityState FromEntities(
      const std::map<EntityId, std::vector<MentionId>>& entities);

  std::size_t num_entities() const;
  std::size_t num_mentions() const { return num_mentions_; }

  bool Contains(MentionId m) const;
  EntityId EntityOf(MentionId m) const;
  bool IsLive(EntityId e) const;
  std::span<const MentionId> Members(EntityId e) const;
  std::size_t Size(EntityId e) const { return Members(e).size(); }
  // Bumped on every membership change of the entity.
  std::uint64_t Version(EntityId e) const;

  // The id the next created entity will receive.
  EntityId next_entity_id() const { return next_id_.load(); }

  // Live entity ids in ascending order.
  std::vector<EntityId> Entities() const;
  // Uniform draw over live entities. The state must not be empty.
  EntityId RandomEntity(Rng& rng) const;
  // Uniform draw over live entities other than `excluded`, plus the fresh
  // entity when `include_fresh` is set. Returns kNoEntity when nothing
  // qualifies.
  EntityId RandomEntityExcept(EntityId excluded, bool include_fresh,
                              Rng& rng) const;
  MentionId RandomMember(EntityId e, Rng& rng) const;

  // True when applying the move changes nothing (same entity, or moving the
  // only member of an entity to a fresh entity).
  bool IsNoOp(const Move& move) const;

  // Moves move.mention from move.source to move.target. A target of
  // kFreshEntity or next_entity_id() creates a new entity. An emptied source
  // is deleted. Throws ContractError if the mention is not in the source or
  // the target does not exist. Returns the id of the receiving entity.
  EntityId Apply(const Move& move);

  // Try-only exclusive access to one entity.
  bool TryLock(EntityId e);
  void Unlock(EntityId e);

  // Sorted list of sorted member lists; ids of entities are dropped.
  std::vector<std::vector<MentionId>> Partition() const;

  // Checks that assignment, memberships and the live list agree and that
  // no live entity is empty.
  bool CheckInvariants(std::string* why = nullptr) const;

 private:
  struct Record {
    std::vector<MentionId> members;
    std::uint64_t version = 0;
    std::atomic<bool> locked{false};
    std::atomic<bool> live{false};
    std::uint32_t live_pos = 0;
  };

  static constexpr int kBaseBits = 6;
  static constexpr int kNumSegments = 27;

  static int SegmentOf(EntityId id);
  static EntityId SegmentStart(int segment);
  static std::size_t SegmentSize(int segment);

  Record& At(EntityId id) const;
  Record* Find(EntityId id) const;
  Record& Create(EntityId id);
  void ResetMentions(std::size_t id_capacity);
  void CopyFrom(const EntityState& other);
  void Clear();
  void AddLive(EntityId id, Record& rec);
  void RemoveLive(Record& rec);

  std::array<std::atomic<Record*>, kNumSegments> segments_{};
  std::mutex segment_mu_;

  // Indexed by mention id; kNoEntity for ids outside the state.
  std::unique_ptr<std::atomic<EntityId>[]> assignment_;
  std::vector<std::uint32_t> member_pos_;
  std::size_t id_capacity_ = 0;
  std::size_t num_mentions_ = 0;

  mutable std::mutex live_mu_;
  std::vector<EntityId> live_;

  std::atomic<EntityId> next_id_{0};
};

EntityState InitSingletons(std::span<const MentionId> ids);
EntityState InitSingleCluster(std::span<const MentionId> ids);
// Value-semantics form of EntityState::Apply.
EntityState ApplyMove(const EntityState& state, const Move& move);

enum class AcceptanceMode { kGreedy, kMetropolis };

// Greedy accepts iff delta > 0. Metropolis accepts with probability
// min(1, exp(delta)) and draws from `rng` only when delta < 0.
bool Accept(double delta, AcceptanceMode mode, Rng& rng);

// One json object per line: {"entity_id": 3, "members": [0, 5]}.
void WriteStateJsonl(std::ostream& out, const EntityState& state);
EntityState ReadStateJsonl(std::istream& in);

}  // namespace qder

#endif  // QDER_MODEL_H_
