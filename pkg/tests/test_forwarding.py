import math

import pytest
from hypothesis import given, strategies as st

from lorahop.channel import ChannelConfig
from lorahop.forwarding import (BUNDLE_MAX_MESSAGES, ContactTracker, DeviceQueue,
                                Message, OverheardHeader, RobcConfig, Scheme,
                                bundle_for_uplink, node_to_node_rca_etx,
                                packet_service_time, packet_size_bytes, peek_ewma,
                                plan_relay, rca_etx_forward_decision, rgq,
                                robc_transfer_amount, robc_weight, rpst,
                                update_ewma, update_queue)


def msg(i, origin="a", created=0, trail=None):
    trail = trail if trail is not None else (origin,)
    return Message(id=f"{origin}:{i:05d}", origin=origin, created_ms=created,
                   hop_trail=trail, previous_hop=trail[-2] if len(trail) > 1 else None)


def filled_queue(n, q_max=1000, origin="a"):
    q = DeviceQueue(q_max=q_max)
    for i in range(n):
        q.push_local(msg(i, origin=origin, created=i))
    return q


class TestRpst:
    def test_branch1_prev_slot_contact(self):
        tr = ContactTracker()
        tr.capacity_at_prev_slot = 980.0  # packet of 1960 bits takes 2 s
        assert rpst(tr, t_s=500.0, t_delta_s=60.0, packet_bits=1960.0,
                    init_prior_s=999.0) == pytest.approx(62.0)

    def test_branch2_elapsed_since_last_contact(self):
        tr = ContactTracker()
        tr.capacity_at_prev_slot = 0.0
        tr.last_contact_end_ms = 1_000_000
        tr.capacity_at_last_success = 980.0
        assert rpst(tr, t_s=1300.0, t_delta_s=60.0, packet_bits=1960.0,
                    init_prior_s=999.0) == pytest.approx(362.0)

    def test_in_contact_zero_wait_is_pure_transmission_time(self):
        tr = ContactTracker()
        tr.capacity_at_prev_slot = 980.0
        assert rpst(tr, 100.0, 0.0, 1960.0, 999.0) == pytest.approx(2.0)

    def test_no_history_returns_prior(self):
        tr = ContactTracker()
        assert rpst(tr, 100.0, 5.0, 1960.0, 181.0) == 181.0


class TestEwma:
    def test_blend_half(self):
        tr = ContactTracker(alpha=0.5)
        tr.ewma_rpst_s = 100.0
        assert update_ewma(tr, 50.0) == pytest.approx(75.0)

    def test_first_sample_taken_whole(self):
        tr = ContactTracker(alpha=0.5)
        assert update_ewma(tr, 40.0) == 40.0

    def test_geometric_contraction(self):
        tr = ContactTracker(alpha=0.5)
        update_ewma(tr, 80.0)
        for k in range(1, 11):
            update_ewma(tr, 16.0)
            assert abs(tr.ewma_rpst_s - 16.0) == pytest.approx((0.5 ** k) * 64.0)

    def test_negative_sample_rejected(self):
        with pytest.raises(ValueError):
            update_ewma(ContactTracker(), -1.0)

    @given(prev=st.floats(min_value=0, max_value=1e6),
           cur=st.floats(min_value=0, max_value=1e6),
           alpha=st.floats(min_value=0.01, max_value=1.0))
    def test_output_is_convex_combination(self, prev, cur, alpha):
        tr = ContactTracker(alpha=alpha)
        tr.ewma_rpst_s = prev
        out = update_ewma(tr, cur)
        assert min(prev, cur) - 1e-9 <= out <= max(prev, cur) + 1e-9

    def test_peek_does_not_commit(self):
        tr = ContactTracker(alpha=0.5)
        tr.ewma_rpst_s = 100.0
        assert peek_ewma(tr, 50.0) == pytest.approx(75.0)
        assert tr.ewma_rpst_s == 100.0
        fresh = ContactTracker(alpha=0.5)
        assert peek_ewma(fresh, 42.0) == 42.0
        assert fresh.ewma_rpst_s is None


class TestNodeToSink:
    def test_fresh_device_in_contact_advertises_packet_time(self):
        tr = ContactTracker(alpha=0.5)
        tr.capacity_at_prev_slot = 19600.0  # 1960 bits -> 0.1 s
        sample = rpst(tr, 10.0, 0.0, 1960.0, 999.0)
        assert update_ewma(tr, sample) == pytest.approx(0.1)

    def test_out_of_contact_metric_grows_across_slots(self):
        tr = ContactTracker(alpha=0.5)
        tr.capacity_at_prev_slot = 0.0
        tr.last_contact_end_ms = 0
        tr.capacity_at_last_success = 980.0
        values = []
        for slot_t in (180.0, 360.0, 540.0, 720.0):
            values.append(update_ewma(tr, rpst(tr, slot_t, 0.0, 1960.0, 999.0)))
        assert values == sorted(values)
        assert values[0] < values[-1]

    def test_identical_histories_identical_values(self):
        def play():
            tr = ContactTracker(alpha=0.5)
            tr.capacity_at_prev_slot = 500.0
            update_ewma(tr, rpst(tr, 180.0, 3.0, 1960.0, 999.0))
            tr.note_attempt(200_000, 0.0, acked=False)
            update_ewma(tr, rpst(tr, 360.0, 3.0, 1960.0, 999.0))
            return tr.ewma_rpst_s
        assert play() == play()


class TestNodeToNode:
    def cfg(self):
        return ChannelConfig(rssi_min_dbm=-120.0, rssi_max_dbm=-60.0, c_max_bps=5470.0)

    def test_full_capacity_division(self):
        metric = node_to_node_rca_etx(-50.0, self.cfg(), 1960.0)
        assert metric == pytest.approx(1960.0 / 5470.0)
        assert metric == pytest.approx(0.358, abs=1e-3)

    def test_below_floor_is_infinite(self):
        assert math.isinf(node_to_node_rca_etx(-130.0, self.cfg(), 1960.0))

    def test_linear_in_packet_bits(self):
        one = node_to_node_rca_etx(-90.0, self.cfg(), 1000.0)
        two = node_to_node_rca_etx(-90.0, self.cfg(), 2000.0)
        assert two == pytest.approx(2 * one)


class TestForwardDecision:
    def test_clear_makes_handover(self):
        assert rca_etx_forward_decision(362.0, 62.0, 0.4)

    def test_tie_holds_data(self):
        assert not rca_etx_forward_decision(62.0, 62.0, 0.0)

    def test_infinite_link_never_forwards(self):
        assert not rca_etx_forward_decision(1e12, 0.0, math.inf)


class TestQueueDynamics:
    def test_outgoing_bounded_then_refilled(self):
        q = filled_queue(5)
        out = list(q.entries)
        res = update_queue(q, generated=[msg(100 + i) for i in range(3)],
                           incoming=[msg(200 + i, origin="b", trail=("b", "a")) for i in range(2)],
                           outgoing=out, incoming_from="b")
        assert len(q) == 5
        assert res["dropped"] == 0

    def test_growth_by_generation(self):
        q = filled_queue(10)
        update_queue(q, generated=[msg(99)], incoming=[], outgoing=[])
        assert len(q) == 11

    def test_overflow_refusal_keeps_conservation(self):
        q = filled_queue(8, q_max=10)
        incoming = [msg(300 + i, origin="b", trail=("b", "a")) for i in range(5)]
        res = update_queue(q, [], incoming, [], incoming_from="b")
        assert len(q) == 10
        assert len(res["accepted"]) == 2
        assert len(res["refused"]) == 3
        # the oldest of the batch are the refused ones
        assert [m.id for m in res["refused"]] == [m.id for m in incoming[:3]]

    def test_local_overflow_drops_new(self):
        q = filled_queue(10, q_max=10)
        res = update_queue(q, generated=[msg(500)], incoming=[], outgoing=[])
        assert res["dropped"] == 1
        assert len(q) == 10
        assert q.drop_count == 1

    def test_remove_unknown_message_rejected(self):
        q = filled_queue(3)
        with pytest.raises(Exception):
            q.remove([msg(77, origin="zz")])


class TestRobc:
    def test_weight_example(self):
        assert robc_weight(10, 0.5, 6, 1.0) == pytest.approx(14.0)

    def test_equal_state_zero_weight(self):
        assert robc_weight(4, 0.7, 4, 0.7) == 0.0

    def test_empty_queue_never_positive(self):
        assert robc_weight(0, 1.0, 3, 1.0) <= 0.0
        assert robc_weight(0, 0.01, 0, 100.0) == 0.0

    def test_transfer_example(self):
        assert robc_transfer_amount(10, 0.5, 6, 1.0) == 7

    def test_transfer_capped_by_bundle(self):
        # delta = 20 - 5 * 1.14 = 14.3 -> bundle cap 12
        assert robc_transfer_amount(20, 1.14, 5, 1.0) == 12

    def test_transfer_capped_by_receiver_free_space(self):
        assert robc_transfer_amount(10, 0.5, 6, 1.0, receiver_free=3) == 3

    def test_delta_floored_not_rounded(self):
        # delta = 5 - 2*0.9 = 3.2 -> 3
        assert robc_transfer_amount(5, 0.9, 2, 1.0) == 3

    def test_rgq_clamping(self):
        cfg = RobcConfig(phi_min=1e-5, phi_max=10.0)
        assert rgq(math.inf, cfg) == 1e-5
        assert rgq(1e-9, cfg) == 10.0
        assert rgq(2.0, cfg) == pytest.approx(0.5)

    @given(qx=st.integers(min_value=0, max_value=1000),
           qy=st.integers(min_value=0, max_value=1000),
           mx=st.floats(min_value=1e-3, max_value=1e6),
           my=st.floats(min_value=1e-3, max_value=1e6))
    def test_weight_finite_for_clamped_inputs(self, qx, qy, mx, my):
        cfg = RobcConfig()
        w = robc_weight(qx, rgq(mx, cfg), qy, rgq(my, cfg))
        assert math.isfinite(w)


class TestPlanRelay:
    def header(self, metric=62.0, qlen=None, rssi=-60.0):
        return OverheardHeader(sender="b", rca_etx_s=metric, queue_len=qlen,
                               heard_ms=0, rssi_dbm=rssi)

    def cfg(self):
        return ChannelConfig(rssi_min_dbm=-120.0, rssi_max_dbm=-60.0, c_max_bps=5470.0)

    def test_norouting_never_acts(self):
        q = filled_queue(5)
        assert plan_relay(Scheme.NOROUTING, 1e9, q, self.header(),
                          self.cfg(), RobcConfig(), 1000) is None

    def test_rca_etx_forwards_oldest_bundle(self):
        q = filled_queue(30)
        plan = plan_relay(Scheme.RCA_ETX, 362.0, q, self.header(62.0),
                          self.cfg(), RobcConfig(), 1000)
        assert plan is not None
        assert [m.id for m in plan.messages] == [m.id for m in q.entries[:12]]

    def test_rca_etx_holds_when_not_better(self):
        q = filled_queue(5)
        assert plan_relay(Scheme.RCA_ETX, 62.0, q, self.header(62.0),
                          self.cfg(), RobcConfig(), 1000) is None

    def test_robc_moves_delta_messages(self):
        q = filled_queue(10)
        cfg = RobcConfig(phi_min=1e-6, phi_max=100.0)
        # self metric 2.0 -> phi 0.5; neighbor metric 1.0 -> phi 1.0
        plan = plan_relay(Scheme.ROBC, 2.0, q, self.header(1.0, qlen=6),
                          self.cfg(), cfg, 1000)
        assert plan is not None
        assert len(plan.messages) == 7

    def test_robc_without_queue_header_is_inert(self):
        q = filled_queue(10)
        assert plan_relay(Scheme.ROBC, 2.0, q, self.header(1.0, qlen=None),
                          self.cfg(), RobcConfig(), 1000) is None

    def test_loop_suppression_excludes_visited_messages(self):
        q = DeviceQueue(q_max=100)
        came_from_b = msg(1, origin="b", trail=("b", "a"))
        local = msg(2, origin="a")
        q.accept_relayed([came_from_b], "b")
        q.push_local(local)
        plan = plan_relay(Scheme.RCA_ETX, 1e6, q, self.header(0.1),
                          self.cfg(), RobcConfig(), 1000)
        assert plan is not None
        assert [m.id for m in plan.messages] == [local.id]

    def test_all_messages_visited_means_no_relay(self):
        q = DeviceQueue(q_max=100)
        q.accept_relayed([msg(1, origin="b", trail=("b", "a"))], "b")
        assert plan_relay(Scheme.RCA_ETX, 1e6, q, self.header(0.1),
                          self.cfg(), RobcConfig(), 1000) is None


class TestBundle:
    def test_takes_twelve_oldest(self):
        q = filled_queue(30)
        pkt = bundle_for_uplink("a", q, 12.5, Scheme.RCA_ETX, sent_ms=0)
        assert len(pkt.messages) == BUNDLE_MAX_MESSAGES
        assert [m.id for m in pkt.messages] == [m.id for m in q.entries[:12]]

    def test_small_queue_all_bundled(self):
        q = filled_queue(5)
        pkt = bundle_for_uplink("a", q, 12.5, Scheme.NOROUTING, sent_ms=0)
        assert len(pkt.messages) == 5

    def test_header_carries_advertised_metric_and_queue_len(self):
        q = filled_queue(7)
        pkt = bundle_for_uplink("a", q, 12.5, Scheme.ROBC, sent_ms=0)
        assert pkt.header_rca_etx_s == 12.5
        assert pkt.header_queue_len == 7
        pkt2 = bundle_for_uplink("a", q, 12.5, Scheme.RCA_ETX, sent_ms=0)
        assert pkt2.header_queue_len is None

    def test_empty_queue_no_packet(self):
        assert bundle_for_uplink("a", DeviceQueue(q_max=5), 1.0, Scheme.ROBC, 0) is None

    def test_serialized_size_fits_lora_frame(self):
        assert packet_size_bytes(12, Scheme.ROBC) == 252
        assert packet_size_bytes(12, Scheme.RCA_ETX) == 250
        assert packet_size_bytes(12, Scheme.ROBC) <= 255

    def test_hop_trail_extension(self):
        m = msg(1, origin="a")
        m2 = m.relayed_to("b")
        assert m2.hop_trail == ("a", "b")
        assert m2.previous_hop == "a"
        assert m2.id == m.id


def test_packet_service_time_basics():
    assert packet_service_time(1960.0, 5470.0) == pytest.approx(0.3583, abs=1e-4)
    assert math.isinf(packet_service_time(1960.0, 0.0))
