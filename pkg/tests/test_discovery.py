"""The four discovery queries and the endorsement descriptor pipeline."""

from __future__ import annotations

import base64
import random
from itertools import combinations, product

import pytest

from generators import random_network, random_policy
from helpers import endorsements_for

from peerdiscovery.discovery import (
    build_satisfaction_graph,
    config_query,
    endorsement_query,
    handle_query,
    local_membership_query,
    peer_membership_query,
)
from peerdiscovery.errors import NoSatisfiableLayout, UnknownChaincode
from peerdiscovery.layouts import oracle_satisfies
from peerdiscovery.membership import (
    ChaincodeDefined,
    OrgAdded,
    OrgConfig,
    PeerOffline,
    apply_event,
    channel_view,
    new_network,
)
from peerdiscovery.policy import evaluate, group_id, parse_policy
from peerdiscovery.wire import canonical_json

BLOB = base64.b64encode(b"x").decode()


def org(msp: str) -> dict:
    return {"msp": msp, "ca_cert": BLOB, "tls_ca_cert": BLOB}


def peer(pid: str, msp: str, installed=("SampleCC@1.0",), alive=True) -> dict:
    return {
        "id": pid,
        "msp": msp,
        "role": "peer",
        "endpoint": f"{pid}:7051",
        "channels": ["ch1"],
        "installed": {"ch1": list(installed)} if installed else {},
        "heights": {"ch1": 1},
        "alive": alive,
    }


def one_channel(policy: str, peers: list[dict], orgs: list[dict]) -> dict:
    return {
        "channels": [
            {
                "name": "ch1",
                "orgs": orgs,
                "orderers": ["o1:7050"],
                "chaincodes": [
                    {"name": "SampleCC", "version": "1.0", "policy": policy}
                ],
            }
        ],
        "peers": peers,
    }


# --- config query ---------------------------------------------------------------


def test_config_query_fig1(fig1_view):
    result = config_query(fig1_view)
    assert sorted(result.msps) == ["OrgA", "OrgB", "OrgC"]
    assert result.msps["OrgA"] == (b"ca:OrgA", b"tlsca:OrgA")
    assert result.orderers == ("orderer1.example.com:7050",)


def test_config_query_zero_orgs():
    state = new_network(
        {
            "channels": [
                {"name": "ch1", "orgs": [], "orderers": ["o1:7050"], "chaincodes": []}
            ],
            "peers": [],
        }
    )
    result = config_query(channel_view(state, "ch1"))
    assert result.msps == {}


def test_config_query_sees_added_org(fig1):
    apply_event(fig1, OrgAdded("ch1", OrgConfig("OrgD", b"ca4", b"tls4")))
    result = config_query(channel_view(fig1, "ch1"))
    assert result.msps["OrgD"] == (b"ca4", b"tls4")


# --- membership queries ------------------------------------------------------------


def test_peer_membership_fig1(fig1_view):
    infos = peer_membership_query(fig1_view)
    assert [p.peer_id for p in infos] == ["a1", "a2", "a3", "b1", "b2", "c1", "c2", "c3"]
    assert infos[0].chaincodes == frozenset({"SampleCC"})
    assert infos[0].ledger_height == 8


def test_peer_membership_excludes_offline(fig1):
    apply_event(fig1, PeerOffline("a3"))
    infos = peer_membership_query(channel_view(fig1, "ch1"))
    assert len(infos) == 7 and all(p.peer_id != "a3" for p in infos)


def test_peer_membership_empty_channel():
    state = new_network(
        {
            "channels": [
                {"name": "ch1", "orgs": [], "orderers": ["o1:7050"], "chaincodes": []}
            ],
            "peers": [],
        }
    )
    assert peer_membership_query(channel_view(state, "ch1")) == []


def test_local_membership(fig1):
    apply_event(fig1, PeerOffline("c3"))
    infos = local_membership_query(fig1, "a1")
    assert [p.peer_id for p in infos] == ["a1", "a2", "a3", "b1", "b2", "c1", "c2"]


def test_local_membership_single_peer():
    state = new_network(one_channel("OrgA.member", [peer("p1", "OrgA")], [org("OrgA")]))
    infos = local_membership_query(state, "p1")
    assert [p.peer_id for p in infos] == ["p1"]


def test_local_membership_offline_responder_fails_dispatch(fig1):
    apply_event(fig1, PeerOffline("a1"))
    response = handle_query(fig1, "a1", {"id": "q", "type": "local_membership"})
    assert response["ok"] is False
    assert response["error"]["code"] == "unknown_peer"


# --- satisfaction graph ---------------------------------------------------------------


def test_graph_fig1(fig1, fig1_view):
    policy = fig1.channels["ch1"].chaincodes["SampleCC"].endorsement_policy
    graph = build_satisfaction_graph(policy, fig1_view, "SampleCC")
    assert len(graph.principals) == 3
    assert len(graph.peers) == 8
    assert len(graph.edges) == 8  # each peer satisfies exactly its org's principal
    by_group = {
        group_id(p): [q.peer_id for q in graph.peers_for(i)]
        for i, p in enumerate(graph.principals)
    }
    assert by_group == {
        "OrgA/member": ["a1", "a2", "a3"],
        "OrgB/member": ["b1", "b2"],
        "OrgC/member": ["c1", "c2", "c3"],
    }


def test_graph_foreign_org_peer_has_no_edge():
    state = new_network(
        one_channel(
            "AND(OrgA.member, OrgB.member)",
            [peer("p1", "OrgA"), peer("p2", "OrgB"), peer("p3", "OrgD")],
            [org("OrgA"), org("OrgB"), org("OrgD")],
        )
    )
    view = channel_view(state, "ch1")
    policy = state.channels["ch1"].chaincodes["SampleCC"].endorsement_policy
    graph = build_satisfaction_graph(policy, view, "SampleCC")
    p3_index = [i for i, p in enumerate(graph.peers) if p.peer_id == "p3"][0]
    assert all(v != p3_index for _, v in graph.edges)


def test_graph_excludes_peers_without_installation():
    state = new_network(
        one_channel(
            "OrgA.member",
            [peer("p1", "OrgA"), peer("p2", "OrgA", installed=())],
            [org("OrgA")],
        )
    )
    view = channel_view(state, "ch1")
    policy = state.channels["ch1"].chaincodes["SampleCC"].endorsement_policy
    graph = build_satisfaction_graph(policy, view, "SampleCC")
    assert [p.peer_id for p in graph.peers] == ["p1"]


def test_graph_strict_version():
    state = new_network(
        one_channel(
            "OrgA.member",
            [peer("p1", "OrgA", installed=("SampleCC@0.9",))],
            [org("OrgA")],
        )
    )
    view = channel_view(state, "ch1")
    policy = state.channels["ch1"].chaincodes["SampleCC"].endorsement_policy
    assert len(build_satisfaction_graph(policy, view, "SampleCC").peers) == 1
    strict = build_satisfaction_graph(policy, view, "SampleCC", strict_version=True)
    assert len(strict.peers) == 0


def test_graph_unknown_chaincode(fig1_view):
    policy = parse_policy("OrgA.member")
    with pytest.raises(UnknownChaincode):
        build_satisfaction_graph(policy, fig1_view, "NopeCC")


# --- endorsement query ------------------------------------------------------------------


def test_endorsement_fig1_descriptor(fig1_view):
    (descriptor,) = endorsement_query(fig1_view, ["SampleCC"])
    assert descriptor.chaincode == "SampleCC"
    sizes = {g: len(ps) for g, ps in descriptor.endorsers_by_groups.items()}
    assert sizes == {"OrgA/member": 3, "OrgB/member": 2, "OrgC/member": 3}
    assert [l.as_dict() for l in descriptor.layouts] == [
        {"OrgA/member": 1, "OrgB/member": 1, "OrgC/member": 1}
    ]
    assert descriptor.view_seq == 0


def test_endorsement_no_satisfiable_layout(fig1):
    apply_event(fig1, PeerOffline("b1"))
    apply_event(fig1, PeerOffline("b2"))
    with pytest.raises(NoSatisfiableLayout) as excinfo:
        endorsement_query(channel_view(fig1, "ch1"), ["SampleCC"])
    assert "OrgB/member" in str(excinfo.value)


def test_endorsement_prunes_layouts_missing_groups():
    state = new_network(
        one_channel(
            "OutOf(2, OrgA.member, OrgB.member, OrgC.member)",
            [peer("p1", "OrgA"), peer("p2", "OrgB")],
            [org("OrgA"), org("OrgB")],
        )
    )
    (descriptor,) = endorsement_query(channel_view(state, "ch1"), ["SampleCC"])
    assert [l.as_dict() for l in descriptor.layouts] == [
        {"OrgA/member": 1, "OrgB/member": 1}
    ]
    # groups referenced by no surviving layout are dropped
    assert sorted(descriptor.endorsers_by_groups) == ["OrgA/member", "OrgB/member"]


def test_endorsement_unknown_chaincode(fig1_view):
    with pytest.raises(UnknownChaincode):
        endorsement_query(fig1_view, ["NopeCC"])


def test_endorsement_multi_chaincode_order(fig1):
    apply_event(fig1, ChaincodeDefined("ch1", "OtherCC", "1.0", "OrgB.member"))
    # OtherCC is not installed anywhere, so its group is empty
    with pytest.raises(NoSatisfiableLayout):
        endorsement_query(channel_view(fig1, "ch1"), ["OtherCC"])
    apply_event(
        fig1, ChaincodeDefined("ch1", "SampleCC", "1.1", "OR(OrgA.member, OrgB.member)")
    )
    descriptors = endorsement_query(channel_view(fig1, "ch1"), ["SampleCC", "SampleCC"])
    assert [d.chaincode for d in descriptors] == ["SampleCC", "SampleCC"]


def test_descriptor_reflects_policy_change(fig1):
    apply_event(
        fig1,
        ChaincodeDefined(
            "ch1",
            "SampleCC",
            "2.0",
            "AND(OrgA.member, OrgB.member, OrgC.member, OrgD.member)",
        ),
    )
    with pytest.raises(NoSatisfiableLayout):  # no OrgD peers yet
        endorsement_query(channel_view(fig1, "ch1"), ["SampleCC"])


# --- descriptor invariants ----------------------------------------------------------------


def assert_descriptor_sound(state, descriptor):
    policy = state.channels["ch1"].chaincodes[descriptor.chaincode].endorsement_policy
    for layout in descriptor.layouts:
        for g in layout.groups:
            assert g in descriptor.endorsers_by_groups
            assert layout[g] <= len(descriptor.endorsers_by_groups[g])
        pools = [
            (g, list(combinations(descriptor.endorsers_by_groups[g], layout[g])))
            for g in layout.groups
        ]
        # every way of picking layout[g] peers per group satisfies the policy
        for pick in product(*(c for _, c in pools)):
            chosen = [p for sub in pick for p in sub]
            if len({p.peer_id for p in chosen}) < len(chosen):
                continue  # overlapping pick; selection enforces disjointness
            assert oracle_satisfies(policy, layout.as_dict())
            digest = b"tx"
            assert evaluate(policy, endorsements_for(chosen, digest, state), digest)


def test_every_choice_function_satisfies_policy_fig1(fig1, fig1_view):
    (descriptor,) = endorsement_query(fig1_view, ["SampleCC"])
    assert_descriptor_sound(fig1, descriptor)


@pytest.mark.parametrize("seed", range(12))
def test_descriptor_soundness_random(seed):
    rng = random.Random(4000 + seed)
    policy = random_policy(rng, max_leaves=5)
    state = random_network(rng, policy, chaincode="SampleCC")
    view = channel_view(state, "ch1")
    try:
        (descriptor,) = endorsement_query(view, ["SampleCC"])
    except NoSatisfiableLayout:
        return
    assert_descriptor_sound(state, descriptor)


def test_freshness_no_stale_peers(fig1):
    endorsement_query(channel_view(fig1, "ch1"), ["SampleCC"])  # warm anything cached
    apply_event(fig1, PeerOffline("c1"))
    (descriptor,) = endorsement_query(channel_view(fig1, "ch1"), ["SampleCC"])
    assert descriptor.view_seq == 1
    listed = {p.peer_id for ps in descriptor.endorsers_by_groups.values() for p in ps}
    assert "c1" not in listed


# --- envelope dispatch ------------------------------------------------------------------


def test_handle_query_config(fig1):
    response = handle_query(fig1, "a1", {"id": "1", "type": "config", "channel": "ch1"})
    assert response["ok"] and response["id"] == "1" and response["view_seq"] == 0
    assert sorted(response["result"]["msps"]) == ["OrgA", "OrgB", "OrgC"]


def test_handle_query_unknown_type(fig1):
    response = handle_query(fig1, "a1", {"id": "1", "type": "nonsense", "channel": "ch1"})
    assert response["ok"] is False
    assert response["error"]["code"] == "unknown_query_type"


def test_handle_query_endorsement(fig1):
    response = handle_query(
        fig1,
        "a1",
        {
            "id": "2",
            "type": "endorsement",
            "channel": "ch1",
            "payload": {"chaincodes": ["SampleCC"]},
        },
    )
    assert response["ok"]
    descriptor = response["result"]["descriptors"][0]
    assert descriptor["chaincode"] == "SampleCC"
    assert len(descriptor["endorsers_by_groups"]) == 3
    # descriptor peer entries carry no channel-wide chaincode list
    sample_peer = descriptor["endorsers_by_groups"]["OrgA/member"][0]
    assert set(sample_peer) == {"peer_id", "msp", "endpoint", "ledger_height"}


def test_handle_query_error_codes(fig1):
    cases = [
        ({"id": "1", "type": "config", "channel": "nope"}, "unknown_channel"),
        ({"id": "1", "type": "config"}, "bad_request"),
        ({"id": "1", "type": "local_membership", "channel": "ch1"}, "bad_request"),
        ({"id": "1", "type": "endorsement", "channel": "ch1"}, "bad_request"),
        ({"type": "config", "channel": "ch1"}, "bad_request"),
        (
            {"id": "1", "type": "endorsement", "channel": "ch1",
             "payload": {"chaincodes": ["NopeCC"]}},
            "unknown_chaincode",
        ),
    ]
    for envelope, code in cases:
        response = handle_query(fig1, "a1", envelope)
        assert response["ok"] is False and response["error"]["code"] == code


def test_handle_query_unknown_responder(fig1):
    response = handle_query(fig1, "ghost", {"id": "1", "type": "config", "channel": "ch1"})
    assert response["error"]["code"] == "unknown_peer"


def test_strict_channel_restricts_responder(fig1_dict):
    fig1_dict["channels"].append(
        {
            "name": "ch2",
            "orgs": [org("OrgA")],
            "orderers": ["o2:7050"],
            "chaincodes": [],
        }
    )
    state = new_network(fig1_dict)
    envelope = {"id": "1", "type": "config", "channel": "ch2"}
    assert handle_query(state, "a1", envelope)["ok"]  # default: any channel
    strict = handle_query(state, "a1", envelope, strict_channel=True)
    assert strict["error"]["code"] == "unknown_channel"


def test_query_purity_and_stability(fig1):
    envelope = {
        "id": "same",
        "type": "endorsement",
        "channel": "ch1",
        "payload": {"chaincodes": ["SampleCC"]},
    }
    before = canonical_json(handle_query(fig1, "a1", envelope))
    after = canonical_json(handle_query(fig1, "a1", envelope))
    assert before == after
    assert fig1.event_seq == 0
