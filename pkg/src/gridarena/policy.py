"""The agent-decision boundary: policy interface, scripted baselines,
prompt construction, and free-text action parsing.

A policy turns a ``PromptContext`` into a ``PolicyDecision``. Scripted
policies are pure functions of (context, policy-internal seed); the LLM
policy renders a prompt, calls the gateway, and parses the reply, falling
back to REST when the reply has no parseable action line.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .actions import (
    Action,
    ActionParseError,
    Attack,
    Communicate,
    DIRECTIONS,
    GATHER,
    Move,
    REST,
    Reproduce,
    Trade,
    parse_action,
)
from .core import (
    AgentState,
    GameConfig,
    ROLE_CHOOSER,
    ROLE_PROVIDER,
    VARIANT_SEXUAL_SELECTION,
    manhattan,
    vitality_band,
)
from .gateway import GatewayConfig, GatewayError, batch_complete, complete


@dataclass(frozen=True)
class PolicyDecision:
    """One agent's chosen action. ``parse_status`` is "fallback" when the
    raw response had no parseable action, in which case the action is REST."""

    action: Action
    raw_response: str = ""
    parse_status: str = "ok"

    def __post_init__(self):
        if self.parse_status not in ("ok", "fallback"):
            raise ValueError(f"bad parse_status {self.parse_status!r}")
        if self.parse_status == "fallback" and self.action != REST:
            raise ValueError("fallback decisions must be REST")


@dataclass(frozen=True)
class PromptContext:
    observation: Any
    available_actions: tuple[str, ...]
    turn: int


def available_actions(observation: Any) -> tuple[str, ...]:
    """Action names legal for this observer: the survival six, plus
    COMMUNICATE under sexual_selection, plus REPRODUCE for providers only."""
    names = ["GATHER", "MOVE", "ATTACK", "TRADE", "REST", "TRAIN"]
    if observation.variant == VARIANT_SEXUAL_SELECTION:
        names.append("COMMUNICATE")
        if observation.agent.role == ROLE_PROVIDER:
            names.append("REPRODUCE")
    return tuple(names)


def context_for(observation: Any) -> PromptContext:
    return PromptContext(observation=observation,
                         available_actions=available_actions(observation),
                         turn=observation.turn)


# --------------------------------------------------------------------------
# Prompt construction

_ACTION_PLACEHOLDERS = {
    "GATHER": "GATHER",
    "MOVE": "MOVE [direction]",
    "ATTACK": "ATTACK [target_id]",
    "TRADE": "TRADE [target_id] [offer] [request]",
    "REST": "REST",
    "TRAIN": "TRAIN [attribute]",
    "COMMUNICATE": "COMMUNICATE [message]",
    "REPRODUCE": "REPRODUCE [target_id]",
}


def _actions_block(names: Sequence[str]) -> str:
    items = [_ACTION_PLACEHOLDERS[n] for n in names]
    rows = [items[i:i + 3] for i in range(0, len(items), 3)]
    return ",\n".join(", ".join(row) for row in rows)


def _attr_line(attrs: Any) -> str:
    return (f"STR={attrs.STR} SPD={attrs.SPD} INT={attrs.INT} "
            f"SOC={attrs.SOC} END={attrs.END} CHA={attrs.CHA}")


def build_prompt(context: PromptContext) -> str:
    """Render the per-turn decision prompt. Byte-stable for equal contexts.

    List sections (resource nodes, nearby agents, recent actions, messages)
    render their header with zero entry lines when empty.
    """
    obs = context.observation
    me = obs.agent
    sexual = obs.variant == VARIANT_SEXUAL_SELECTION

    lines = [
        f"You are Agent {me.id} in a survival arena.",
        "",
        "YOUR STATUS:",
        f"- Position: ({me.pos[0]}, {me.pos[1]})",
        f"- Food: {me.food}, Tokens: {me.tokens}, Health: {me.health}/{me.max_health}",
        f"- Attributes: {_attr_line(me.attrs)}",
    ]
    if sexual:
        lines.append(f"- Role: {me.role}")
        lines.append(f"- Vitality: {me.vitality} ({vitality_band(me.vitality)})")
    lines.append("")

    lines.append("RESOURCE NODES:")
    for node in obs.nodes:
        entry = f"- {node.kind} node at ({node.pos[0]}, {node.pos[1]})"
        if node.stock is not None:
            entry += f", stock {node.stock}"
        lines.append(entry)
    lines.append("")

    lines.append("NEARBY AGENTS (within 2 cells):")
    for other in obs.nearby:
        entry = (f"- Agent {other.id} at ({other.pos[0]}, {other.pos[1]}): "
                 f"~{other.approx_food} food, ~{other.approx_tokens} tokens")
        if other.role is not None:
            entry += f", {other.role}, vitality {other.vitality}"
        if other.attrs is not None:
            entry += f", attributes {_attr_line(other.attrs)}"
        lines.append(entry)
    lines.append("")

    lines.append("RECENT ACTIONS:")
    for text in obs.recent_actions:
        lines.append(f"- {text}")
    lines.append("")

    if sexual:
        lines.append("MESSAGES:")
        for sender_id, message in obs.messages:
            lines.append(f'- From Agent {sender_id}: "{message}"')
        lines.append("")

    lines.append("AVAILABLE ACTIONS:")
    lines.append(_actions_block(context.available_actions))
    lines.append("")
    lines.append("Offer and request take the form [food]f[tokens]t, e.g. 5f2t.")
    lines.append("")
    lines.append("Choose exactly ONE action. Respond with the action name")
    lines.append("and parameters only.")
    return "\n".join(lines)


def build_proposal_prompt(view: Any) -> str:
    """Render the chooser-side evaluation prompt for a reproduction proposal."""
    lines = [
        f"You are Agent {view.chooser_id} in a survival arena.",
        "",
        f"Agent {view.provider_id} at your cell proposes reproduction with you.",
        "",
        "PROPOSER:",
        f"- Attributes: {_attr_line(view.provider_attrs)}",
        f"- Vitality: {view.provider_vitality} ({vitality_band(view.provider_vitality)})",
        f"- Food: {view.provider_food}, Tokens: {view.provider_tokens}",
        "",
        "YOUR STATUS:",
        f"- Food: {view.chooser_food}, Tokens: {view.chooser_tokens}, "
        f"Vitality: {view.chooser_vitality} ({vitality_band(view.chooser_vitality)})",
        "",
        f"Evaluating this proposal costs you {view.food_cost} food "
        f"and {view.token_cost} tokens.",
        "",
        "Respond with ACCEPT or REJECT only.",
    ]
    return "\n".join(lines)


def parse_verdict(text: str) -> bool | None:
    """Find the first ACCEPT/REJECT line; None when neither appears."""
    for raw in text.splitlines():
        word = raw.strip().rstrip(".!").strip().upper()
        if word == "ACCEPT":
            return True
        if word == "REJECT":
            return False
    return None


# --------------------------------------------------------------------------
# Policy interface


class Policy:
    """Decision maker for one or more agents.

    ``decide_batch`` isolates failures per context by returning the caught
    exception in that slot; the engine substitutes REST and logs the fault.
    """

    def decide(self, context: PromptContext) -> PolicyDecision:
        raise NotImplementedError

    def decide_batch(self, contexts: Sequence[PromptContext]) -> list[PolicyDecision | BaseException]:
        out: list[PolicyDecision | BaseException] = []
        for context in contexts:
            try:
                out.append(self.decide(context))
            except Exception as exc:
                out.append(exc)
        return out

    def evaluate_proposal(self, view: Any) -> bool:
        return True


class PolicyMap:
    """Routes agents to policies and implements the engine-facing protocol.

    Policies are created lazily through ``factory(agent)`` and cached by
    agent id, so offspring born mid-game get policies on first use. Contexts
    are batched per policy instance, preserving agent-id order.
    """

    def __init__(self, factory):
        self._factory = factory
        self._cache: dict[int, Policy] = {}

    def policy_for(self, agent: AgentState) -> Policy:
        policy = self._cache.get(agent.id)
        if policy is None:
            policy = self._factory(agent)
            self._cache[agent.id] = policy
        return policy

    def decide_all(self, observations: dict[int, Any]) -> dict[int, PolicyDecision | BaseException]:
        order = sorted(observations)
        contexts: dict[int, PromptContext] = {}
        groups: list[tuple[Policy, list[int]]] = []
        group_index: dict[int, int] = {}
        for aid in order:
            obs = observations[aid]
            policy = self.policy_for(obs.agent)
            contexts[aid] = context_for(obs)
            gi = group_index.get(id(policy))
            if gi is None:
                group_index[id(policy)] = len(groups)
                groups.append((policy, [aid]))
            else:
                groups[gi][1].append(aid)

        results: dict[int, PolicyDecision | BaseException] = {}
        for policy, ids in groups:
            try:
                batch = list(policy.decide_batch([contexts[a] for a in ids]))
            except Exception as exc:
                batch = [exc] * len(ids)
            if len(batch) != len(ids):
                error = RuntimeError(
                    f"policy returned {len(batch)} decisions for {len(ids)} contexts")
                batch = [error] * len(ids)
            for aid, decision in zip(ids, batch):
                results[aid] = decision
        return results

    def evaluate_proposal(self, chooser: AgentState, view: Any) -> bool:
        # A fault while evaluating is the conservative verdict: reject.
        try:
            return bool(self.policy_for(chooser).evaluate_proposal(view))
        except Exception:
            return False


# --------------------------------------------------------------------------
# Scripted baselines


def derive_policy_seed(config_seed: int, agent_id: int) -> int:
    """Stable per-agent seed stream, independent of the game RNG."""
    digest = hashlib.sha256(f"{config_seed}:{agent_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class ScriptedPolicy(Policy):
    def __init__(self, config: GameConfig, seed: int):
        self.config = config
        self.rng = random.Random(seed)

    # Shared movement helper: one greedy Manhattan step, ties broken N,E,S,W.
    def _step_toward(self, frm: tuple[int, int], to: tuple[int, int]) -> str | None:
        best_name = None
        best_dist = manhattan(frm, to)
        for name in ("N", "E", "S", "W"):
            dx, dy = DIRECTIONS[name]
            nxt = (frm[0] + dx, frm[1] + dy)
            if not (0 <= nxt[0] < self.config.grid_width
                    and 0 <= nxt[1] < self.config.grid_height):
                continue
            dist = manhattan(nxt, to)
            if dist < best_dist:
                best_name, best_dist = name, dist
        return best_name

    def _move_toward(self, agent: AgentState, to: tuple[int, int]) -> Move | None:
        first = self._step_toward(agent.pos, to)
        if first is None:
            return None
        steps = [first]
        if agent.attrs.SPD >= 5:
            dx, dy = DIRECTIONS[first]
            mid = (agent.pos[0] + dx, agent.pos[1] + dy)
            second = self._step_toward(mid, to)
            if second is not None:
                steps.append(second)
        return Move(tuple(steps))

    def _gather_action(self, obs: Any, kind: str | None = None) -> Action | None:
        """GATHER on a usable node underfoot, else MOVE toward the nearest
        candidate node (unknown stock counts as a candidate), else None."""
        me = obs.agent

        def usable(node) -> bool:
            if kind is not None and node.kind != kind:
                return False
            return node.stock is None or node.stock > 0

        here = next((n for n in obs.nodes if n.pos == me.pos), None)
        if here is not None and usable(here):
            return GATHER
        candidates = [n for n in obs.nodes if n.pos != me.pos and usable(n)]
        if not candidates:
            return None
        target = min(candidates, key=lambda n: (manhattan(me.pos, n.pos), n.pos))
        return self._move_toward(me, target.pos)


class RestOnly(ScriptedPolicy):
    """Sits still forever; the survival-horizon oracle."""

    def decide(self, context: PromptContext) -> PolicyDecision:
        return PolicyDecision(REST)


class RandomWalker(ScriptedPolicy):
    """One seeded-random step per turn."""

    def decide(self, context: PromptContext) -> PolicyDecision:
        return PolicyDecision(Move((self.rng.choice("NSEW"),)))


class GreedyGatherer(ScriptedPolicy):
    """Gathers underfoot, else heads for the nearest node believed non-empty."""

    def decide(self, context: PromptContext) -> PolicyDecision:
        action = self._gather_action(context.observation)
        return PolicyDecision(action if action is not None else REST)


class Trader(ScriptedPolicy):
    """Offers 2 food for 1 token to the richest visible neighbor whenever
    food exceeds ten upkeeps' worth; otherwise behaves like the gatherer."""

    def decide(self, context: PromptContext) -> PolicyDecision:
        obs = context.observation
        me = obs.agent
        if obs.nearby and me.food > 10 * self.config.upkeep:
            target = max(obs.nearby,
                         key=lambda n: (n.approx_food + n.approx_tokens, -n.id))
            return PolicyDecision(Trade(target.id, offer_food=2, offer_tokens=0,
                                        request_food=0, request_tokens=1))
        action = self._gather_action(obs)
        return PolicyDecision(action if action is not None else REST)


class Aggressor(ScriptedPolicy):
    """Attacks the weakest-looking co-located agent (lowest approximate food,
    ties to the lower id) while it can pay the token cost, else gathers."""

    def decide(self, context: PromptContext) -> PolicyDecision:
        obs = context.observation
        me = obs.agent
        same_cell = [n for n in obs.nearby if n.pos == me.pos]
        if same_cell and me.tokens >= 1:
            target = min(same_cell, key=lambda n: (n.approx_food, n.id))
            return PolicyDecision(Attack(target.id))
        action = self._gather_action(obs)
        return PolicyDecision(action if action is not None else REST)


class Suitor(ScriptedPolicy):
    """Provider baseline: proposes to a co-located chooser when well stocked,
    signals with COMMUNICATE when flush with tokens, keeps itself fed, and
    otherwise drifts toward visible choosers."""

    PROPOSE_FOOD_FLOOR = 20
    SIGNAL_TOKEN_FLOOR = 8

    def decide(self, context: PromptContext) -> PolicyDecision:
        obs = context.observation
        me = obs.agent
        choosers = [n for n in obs.nearby if n.role == ROLE_CHOOSER]

        here = [n for n in choosers if n.pos == me.pos]
        if here and me.food >= self.PROPOSE_FOOD_FLOOR and me.tokens >= 3:
            target = max(here, key=lambda n: ((n.vitality or 0), -n.id))
            return PolicyDecision(Reproduce(target.id))

        revealed = me.revealed_until != 0 and me.revealed_until >= obs.turn
        if choosers and me.tokens >= self.SIGNAL_TOKEN_FLOOR and not revealed:
            message = f"Agent {me.id} {vitality_band(me.vitality)}, vitality {me.vitality}, food {me.food}"
            return PolicyDecision(Communicate(message))

        if me.tokens < 3:
            action = self._gather_action(obs, kind="token") or self._gather_action(obs)
            if action is not None:
                return PolicyDecision(action)
        if me.food < self.PROPOSE_FOOD_FLOOR:
            action = self._gather_action(obs, kind="food") or self._gather_action(obs)
            if action is not None:
                return PolicyDecision(action)

        if choosers:
            target = min(choosers, key=lambda n: (manhattan(me.pos, n.pos), n.id))
            move = self._move_toward(me, target.pos)
            if move is not None:
                return PolicyDecision(move)
        return PolicyDecision(Move((self.rng.choice("NSEW"),)))


class PickyChooser(ScriptedPolicy):
    """Chooser baseline: gathers to stay solvent and accepts only proposals
    from providers of robust-or-better vitality."""

    ACCEPT_VITALITY_FLOOR = 6

    def decide(self, context: PromptContext) -> PolicyDecision:
        action = self._gather_action(context.observation)
        return PolicyDecision(action if action is not None else REST)

    def evaluate_proposal(self, view: Any) -> bool:
        return view.provider_vitality >= self.ACCEPT_VITALITY_FLOOR


class ScriptedSequence(ScriptedPolicy):
    """Plays a fixed list of actions, then RESTs (or loops). Test workhorse."""

    def __init__(self, config: GameConfig, seed: int,
                 sequence: Iterable[Action] = (), loop: bool = False):
        super().__init__(config, seed)
        self.sequence = list(sequence)
        self.loop = loop
        self._cursor = 0

    def decide(self, context: PromptContext) -> PolicyDecision:
        if not self.sequence:
            return PolicyDecision(REST)
        if self._cursor >= len(self.sequence):
            if not self.loop:
                return PolicyDecision(REST)
            self._cursor = 0
        action = self.sequence[self._cursor]
        self._cursor += 1
        return PolicyDecision(action)


SCRIPTED_POLICIES: dict[str, type[ScriptedPolicy]] = {
    "rest": RestOnly,
    "walker": RandomWalker,
    "greedy": GreedyGatherer,
    "trader": Trader,
    "aggressor": Aggressor,
    "suitor": Suitor,
    "picky": PickyChooser,
}


def make_scripted(name: str, agent_id: int, config: GameConfig) -> ScriptedPolicy:
    try:
        cls = SCRIPTED_POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown scripted policy {name!r}; "
                         f"choices: {', '.join(sorted(SCRIPTED_POLICIES))}") from None
    return cls(config, derive_policy_seed(config.seed, agent_id))


# --------------------------------------------------------------------------
# LLM-backed policy


class LLMPolicy(Policy):
    """Prompts a chat-completion endpoint for every decision.

    Use one shared instance for all LLM agents in a run so their contexts
    batch into a single bounded-concurrency gateway call per turn. Gateway
    failures surface as exceptions (the engine substitutes REST and logs a
    policy_fault); replies that merely fail to parse become REST decisions
    flagged ``parse_status="fallback"``.
    """

    def __init__(self, gateway_config: GatewayConfig):
        self.gateway_config = gateway_config

    def decide(self, context: PromptContext) -> PolicyDecision:
        result = self.decide_batch([context])[0]
        if isinstance(result, BaseException):
            raise result
        return result

    def decide_batch(self, contexts: Sequence[PromptContext]) -> list[PolicyDecision | BaseException]:
        prompts = [build_prompt(c) for c in contexts]
        replies = batch_complete(prompts, self.gateway_config)
        out: list[PolicyDecision | BaseException] = []
        for reply in replies:
            if isinstance(reply, GatewayError):
                out.append(reply)
                continue
            try:
                out.append(PolicyDecision(parse_action(reply), raw_response=reply))
            except ActionParseError:
                out.append(PolicyDecision(REST, raw_response=reply, parse_status="fallback"))
        return out

    def evaluate_proposal(self, view: Any) -> bool:
        try:
            reply = complete(build_proposal_prompt(view), self.gateway_config)
        except GatewayError:
            return False
        return parse_verdict(reply) is True
