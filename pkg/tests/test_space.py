from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force_block_count, brute_force_blocks

from blocknas.space import (
    ArchCode,
    BlockCode,
    BlockGene,
    DecodeError,
    LayerGene,
    ParseError,
    SpaceConfig,
    StateError,
    block_code,
    chain_block,
    count_archs,
    count_blocks,
    count_report,
    decode_arch,
    decode_block,
    eob_block,
    parse_code,
    serialize_code,
    standard_architecture,
    standard_plan,
    valid_actions_arch,
    valid_actions_block,
    validate_arch,
    validate_block,
)

FIG_1A = [[1, "GCNII", "ReLU", -1], [2, "GATII", "ELU", 0], [3, "EoB", None, None]]


def _rules(violations):
    return {v.rule for v in violations}


def rollout_block(rng, cfg):
    genes = []
    while True:
        acts = valid_actions_block(genes, cfg)
        genes.append(acts[rng.integers(len(acts))])
        if genes[-1].is_eob:
            return BlockCode(tuple(genes))


def rollout_arch(rng, pool_size, cfg):
    genes = []
    while True:
        acts = valid_actions_arch(genes, pool_size, cfg)
        genes.append(acts[rng.integers(len(acts))])
        if genes[-1].is_eob:
            return ArchCode(tuple(genes))


# --- valid actions --------------------------------------------------------

def test_start_state_has_60_actions_and_no_eob():
    acts = valid_actions_block([], SpaceConfig())
    assert len(acts) == 60 and not any(a.is_eob for a in acts)
    assert {a.prefix for a in acts} == {-1, 0}


def test_length_two_partial():
    partial = list(BlockCode.from_lists(FIG_1A[:2]).genes)
    acts = valid_actions_block(partial, SpaceConfig())
    assert len(acts) == 121 and acts[-1].is_eob
    assert {a.prefix for a in acts if not a.is_eob} == {-1, 0, 1, 2}


def test_full_partial_only_eob():
    cfg = SpaceConfig(max_layers=2)
    partial = list(chain_block(["GCNII", "GCNII"]).layers)
    acts = valid_actions_block(partial, cfg)
    assert len(acts) == 1 and acts[0].is_eob


def test_terminated_partial_is_state_error():
    with pytest.raises(StateError):
        valid_actions_block(list(BlockCode.from_lists(FIG_1A).genes))


def test_arch_actions():
    cfg = SpaceConfig()
    assert len(valid_actions_arch([], 3, cfg)) == 54
    one = [BlockGene(1, 0, 0.3, 0.3, -1)]
    acts = valid_actions_arch(one, 1, cfg)
    assert len(acts) == 28 and acts[-1].is_eob
    full = [BlockGene(i, 0, 0.3, 0.3, -1) for i in range(1, 3)]
    assert [a.is_eob for a in valid_actions_arch(full, 2, SpaceConfig(max_blocks=2))] == [True]
    with pytest.raises(StateError):
        valid_actions_arch([], 0, cfg)


# --- validation -----------------------------------------------------------

def test_fig_1a_code_valid_and_rendered():
    code = BlockCode.from_lists(FIG_1A)
    assert validate_block(code) == []
    assert serialize_code(code) == '[[1,"GCNII","ReLU",-1],[2,"GATII","ELU",0],[3,"EoB",null,null]]'


def test_prefix_equal_to_index():
    code = BlockCode.from_lists([[1, "GCNII", "ReLU", 1], [2, "EoB", None, None]])
    assert "prefix<index" in _rules(validate_block(code))


def test_unterminated():
    code = BlockCode.from_lists([[1, "GCNII", "ReLU", -1]])
    assert "unterminated" in _rules(validate_block(code))


def test_other_violations():
    cases = {
        "consecutive-index": [LayerGene(1, "GCNII", "ReLU", -1), LayerGene(3, "EoB")],
        "eob-not-last": [LayerGene(1, "EoB"), LayerGene(2, "GCNII", "ReLU", -1)],
        "activation": [LayerGene(1, "GCNII", "Swish", -1), LayerGene(2, "EoB")],
        "layer-type": [LayerGene(1, "GIN", "ReLU", -1), LayerGene(2, "EoB")],
    }
    for rule, genes in cases.items():
        assert rule in _rules(validate_block(BlockCode(tuple(genes)))), rule
    with pytest.raises(ParseError, match="gene 1"):
        BlockCode.from_lists([[1, "GCNII", "Swish", -1], [2, "EoB", None, None]])
    too_long = chain_block(["GCNII"] * 3)
    assert "too-long" in _rules(validate_block(too_long, SpaceConfig(max_layers=2)))
    assert "empty" in _rules(validate_block(BlockCode(())))


def test_arch_violations():
    bad_drop = ArchCode((BlockGene(1, 0, 0.2, 0.3, -1), eob_block(2)))
    assert "dropout" in _rules(validate_arch(bad_drop, 1))
    bad_type = ArchCode((BlockGene(1, 4, 0.3, 0.3, -1), eob_block(2)))
    assert "block-type" in _rules(validate_arch(bad_type, 3))


# --- decoding -------------------------------------------------------------

def test_decode_chain_single_sink():
    dag = decode_block(chain_block(["GCNII", "GATII", "AGNNII"]))
    assert dag.sinks == (3,) and dag.edges() == [(-1, 1), (1, 2), (2, 3)]


def test_decode_parallel_and_diamond():
    par = decode_block(block_code([[1, "GCNII", "ReLU", -1], [2, "GATII", "ReLU", -1]]))
    assert par.sinks == (1, 2)
    diamond = decode_block(block_code([[1, "GCNII", "ReLU", -1], [2, "GCNII", "ReLU", 1],
                                       [3, "GATII", "ReLU", 1]]))
    assert diamond.sinks == (2, 3) and diamond.successors[1] == (2, 3)


def test_decode_invalid():
    with pytest.raises(DecodeError):
        decode_block(BlockCode.from_lists([[1, "GCNII", "ReLU", 2], [2, "EoB", None, None]]))
    arch = ArchCode((BlockGene(1, 1, 0.3, 0.3, -1), eob_block(2)))
    with pytest.raises(DecodeError):
        decode_arch(arch, [chain_block(["GCNII"])])


def test_standard_architecture():
    arch = standard_architecture(SpaceConfig())
    assert len(arch) == 9
    assert [g.prefix for g in arch.blocks] == [-1, -1, 1, 2, 3, 4, 5, 6]
    assert all(g.dropout == 0.3 and g.alpha == 0.3 for g in arch.blocks)
    assert len(standard_architecture(SpaceConfig(max_blocks=4)).blocks) == 4
    plan = standard_plan(chain_block(["GCNII"] * 3))
    assert plan.depth == 24
    assert plan.residual_edges() == [(i - 2, i) for i in range(3, 9)]


def test_arch_wiring():
    pool = [chain_block(["GCNII"])]
    none = ArchCode(tuple(BlockGene(i, 0, 0.3, 0.3, -1) for i in (1, 2, 3)) + (eob_block(4),))
    assert decode_arch(none, pool).residual_edges() == []
    code = ArchCode((BlockGene(1, 0, 0.3, 0.3, -1), BlockGene(2, 0, 0.3, 0.3, 0),
                     BlockGene(3, 0, 0.3, 0.3, 1), eob_block(4)))
    assert decode_arch(code, pool).residual_edges() == [(1, 2), (1, 3)]


# --- counting -------------------------------------------------------------

@pytest.mark.parametrize("n_l,expected", [(1, 60), (2, 5460)])
def test_count_examples(n_l, expected):
    assert count_blocks(SpaceConfig(max_layers=n_l)) == expected


@pytest.mark.parametrize("n_l", [1, 2, 3])
def test_count_matches_enumeration(n_l):
    assert count_blocks(SpaceConfig(max_layers=n_l)) == brute_force_block_count(n_l)
    assert count_blocks(SpaceConfig(max_layers=n_l)) == sum(1 for _ in brute_force_blocks(n_l))


def test_valid_action_tree_equals_enumeration():
    cfg = SpaceConfig(max_layers=2)
    seen = set()

    def walk(partial):
        for g in valid_actions_block(partial, cfg):
            nxt = partial + [g]
            if g.is_eob:
                seen.add(serialize_code(BlockCode(tuple(nxt))))
            else:
                walk(nxt)
    walk([])
    expected = {json.dumps(rows, separators=(",", ":")) for rows in brute_force_blocks(2)}
    assert seen == expected


def test_count_report_discrepancy():
    rep = count_report(SpaceConfig())
    assert rep["count"] == count_blocks(SpaceConfig())
    assert rep["reported"] == 2.047e18 and rep["ratio"] > 1
    assert count_archs(1, SpaceConfig(max_blocks=1)) == 18


# --- serialization --------------------------------------------------------

def test_parse_errors_have_location():
    with pytest.raises(ParseError, match="line 1"):
        parse_code('[[1,"GCNII","ReLU",-1],[2,"EoB"')
    with pytest.raises(ParseError, match="gene 2"):
        parse_code('[[1,"GCNII","ReLU",-1],[2,"EoB",null]]', "block")


def test_parse_lowercase_names():
    code = parse_code('[[1,"gcnii","relu",-1],[2,"gatii","elu",0],[3,"eob",null,null]]')
    assert code == BlockCode.from_lists(FIG_1A)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_rollouts_validate_and_roundtrip(seed):
    rng = np.random.default_rng(seed)
    cfg = SpaceConfig()
    block = rollout_block(rng, cfg)
    assert validate_block(block, cfg) == []
    assert parse_code(serialize_code(block)) == block
    dag = decode_block(block, cfg)
    assert all(p < i for p, i in dag.edges())
    plan = standard_plan(block, cfg)
    assert plan.depth == 8 * block.depth
    pool_size = int(rng.integers(1, 4))
    arch = rollout_arch(rng, pool_size, cfg)
    assert validate_arch(arch, pool_size, cfg) == []
    assert parse_code(serialize_code(arch)) == arch
    decode_arch(arch, [block] * pool_size, cfg)


def test_gene_objects():
    assert LayerGene(3, "EoB").is_eob and not LayerGene(1, "GCNII", "ReLU", -1).is_eob
    assert eob_block(2).to_list() == [2, "EoB", None, None, None]
