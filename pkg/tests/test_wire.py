import pytest
from hypothesis import given
from hypothesis import strategies as st

from buoytrack import wire
from buoytrack.wire import (
    AckHb,
    AckLogin,
    AckPos,
    BadFrame,
    Err,
    Hb,
    HeartbeatReceived,
    Login,
    Pos,
    PositionReceived,
    Session,
    TerminalOnline,
    decode_frame,
    encode_frame,
    handle_frame,
)

IMEI = "123456789012345"
RMC = "$GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W*6A"


class TestDecode:
    def test_minimal_heartbeat(self):
        assert decode_frame(f"HB,{IMEI}") == Hb(IMEI)

    def test_pos_sentence_is_remainder_after_third_comma(self):
        frame = decode_frame(f"POS,{IMEI},7,{RMC}")
        assert frame == Pos(IMEI, 7, RMC)

    def test_short_imei_rejected(self):
        with pytest.raises(BadFrame):
            decode_frame("LOGIN,12345,1.0")

    def test_login(self):
        assert decode_frame(f"LOGIN,{IMEI},1.0\r\n") == Login(IMEI, "1.0")

    @pytest.mark.parametrize("line", [
        "NOPE,123",
        "HB",
        f"HB,{IMEI},extra",
        f"POS,{IMEI},x,$a*b",
        f"POS,{IMEI},-1,$a*b",
        f"POS,{IMEI},1,GPRMC no dollar",
        f"LOGIN,{IMEI}",
        "ACK,WHAT",
        "ERR,CODE",
        "",
    ])
    def test_bad_frames(self, line):
        with pytest.raises(BadFrame):
            decode_frame(line)

    def test_overlong_frame(self):
        with pytest.raises(BadFrame):
            decode_frame(f"POS,{IMEI},1,$" + "x" * 1100 + "*00")


class TestEncode:
    def test_ack_hb(self):
        assert encode_frame(AckHb()) == "ACK,HB\r\n"

    def test_ack_pos(self):
        assert encode_frame(AckPos(7)) == "ACK,POS,7\r\n"

    def test_err(self):
        assert encode_frame(Err("NOLOGIN", "login required")) == "ERR,NOLOGIN,login required\r\n"

    def test_ack_login(self):
        assert encode_frame(AckLogin(1000)) == "ACK,LOGIN,1000\r\n"


frames = st.one_of(
    st.builds(Login, imei=st.just(IMEI),
              fw_version=st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126,
                                                        exclude_characters=","),
                                 min_size=1, max_size=10)),
    st.builds(Pos, imei=st.just(IMEI), seq=st.integers(0, 10**9),
              sentence=st.just(RMC)),
    st.builds(Hb, imei=st.just(IMEI)),
    st.builds(AckLogin, epoch_seconds=st.integers(0, 2**31)),
    st.builds(AckPos, seq=st.integers(0, 10**9)),
    st.just(AckHb()),
    st.builds(Err,
              code=st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126,
                                                  exclude_characters=","),
                           min_size=1, max_size=8),
              reason=st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126),
                             max_size=40)),
)


@given(frames)
def test_encode_decode_round_trip(frame):
    line = encode_frame(frame)
    assert line.endswith("\r\n")
    assert decode_frame(line) == frame


class TestHandleFrame:
    def test_pos_before_login(self):
        reply, events, session = handle_frame(Session(), Pos(IMEI, 1, RMC), 1000.0)
        assert reply == Err("NOLOGIN", "login required")
        assert events == []
        assert not session.authenticated

    def test_hb_before_login(self):
        reply, events, _ = handle_frame(Session(), Hb(IMEI), 1000.0)
        assert reply.code == "NOLOGIN"
        assert events == []

    def test_login_authenticates(self):
        reply, events, session = handle_frame(Session(), Login(IMEI, "1.0"), 1000.0)
        assert reply == AckLogin(1000)
        assert events == [TerminalOnline(IMEI, "1.0")]
        assert session.authenticated and session.imei == IMEI
        assert session.last_activity == 1000.0

    def test_relogin_rejected(self):
        session = Session(imei=IMEI)
        reply, events, after = handle_frame(session, Login(IMEI, "1.0"), 1000.0)
        assert reply.code == "RELOGIN"
        assert events == []
        assert after == session

    def test_pos_accepted_and_sequenced(self):
        session = Session(imei=IMEI)
        reply, events, session = handle_frame(session, Pos(IMEI, 7, RMC), 1000.0)
        assert reply == AckPos(7)
        assert events == [PositionReceived(IMEI, 7, RMC, 1000.0)]
        assert session.last_seq == 7

    def test_replayed_seq_rejected(self):
        session = Session(imei=IMEI, last_seq=7)
        reply, events, after = handle_frame(session, Pos(IMEI, 7, RMC), 1000.0)
        assert reply.code == "SEQ"
        assert events == []
        assert after.last_seq == 7

    def test_lower_seq_rejected(self):
        session = Session(imei=IMEI, last_seq=7)
        reply, _, _ = handle_frame(session, Pos(IMEI, 3, RMC), 1000.0)
        assert reply.code == "SEQ"

    def test_bad_checksum_sentence_rejected(self):
        session = Session(imei=IMEI)
        bad = RMC[:-2] + "6B"
        reply, events, after = handle_frame(session, Pos(IMEI, 1, bad), 1000.0)
        assert reply.code == "BADPOS"
        assert events == []
        assert after.last_seq is None

    def test_void_sentence_still_acked(self):
        body = "GPRMC,,V,,,,,,,,,"
        acc = 0
        for ch in body:
            acc ^= ord(ch)
        sentence = f"${body}*{acc:02X}"
        session = Session(imei=IMEI)
        reply, events, _ = handle_frame(session, Pos(IMEI, 1, sentence), 1000.0)
        assert reply == AckPos(1)
        assert len(events) == 1

    def test_imei_mismatch_rejected(self):
        session = Session(imei=IMEI)
        other = "543210987654321"
        reply, events, _ = handle_frame(session, Pos(other, 1, RMC), 1000.0)
        assert reply.code == "IMEI"
        assert events == []

    def test_heartbeat_updates_activity(self):
        session = Session(imei=IMEI, last_activity=1.0)
        reply, events, after = handle_frame(session, Hb(IMEI), 999.0)
        assert reply == AckHb()
        assert events == [HeartbeatReceived(IMEI)]
        assert after.last_activity == 999.0

    def test_server_frame_rejected(self):
        with pytest.raises(ValueError):
            handle_frame(Session(), AckHb(), 1000.0)

    def test_pure_transition(self):
        session = Session(imei=IMEI, last_seq=1)
        frame = Pos(IMEI, 2, RMC)
        assert handle_frame(session, frame, 5.0) == handle_frame(session, frame, 5.0)

    @given(st.lists(st.one_of(
        st.builds(Login, imei=st.just(IMEI), fw_version=st.just("1.0")),
        st.builds(Pos, imei=st.just(IMEI), seq=st.integers(0, 20), sentence=st.just(RMC)),
        st.builds(Hb, imei=st.just(IMEI)),
    ), max_size=12))
    def test_no_frame_deauthenticates(self, frame_seq):
        session = Session()
        was_authenticated = False
        for frame in frame_seq:
            _, _, session = handle_frame(session, frame, 1000.0)
            was_authenticated = was_authenticated or session.authenticated
            if was_authenticated:
                assert session.authenticated

    @given(st.lists(st.integers(0, 30), min_size=1, max_size=30))
    def test_accepted_seqs_strictly_increase(self, seqs):
        session = Session(imei=IMEI)
        accepted = []
        for seq in seqs:
            reply, _, session = handle_frame(session, Pos(IMEI, seq, RMC), 1.0)
            if isinstance(reply, AckPos):
                accepted.append(seq)
        assert accepted == sorted(set(accepted))
        # replaying any accepted frame is always rejected
        for seq in accepted:
            reply, _, session = handle_frame(session, Pos(IMEI, seq, RMC), 2.0)
            assert isinstance(reply, Err) and reply.code == "SEQ"


def test_golden_transcript_pure():
    """LOGIN, three POS, HB against a fresh session: the exact ACK lines."""
    session = Session()
    script = [
        Login(IMEI, "1.0"),
        Pos(IMEI, 1, RMC),
        Pos(IMEI, 2, RMC),
        Pos(IMEI, 3, RMC),
        Hb(IMEI),
    ]
    replies = []
    for frame in script:
        reply, _, session = handle_frame(session, frame, 1000.0)
        replies.append(encode_frame(reply))
    assert replies == [
        "ACK,LOGIN,1000\r\n",
        "ACK,POS,1\r\n",
        "ACK,POS,2\r\n",
        "ACK,POS,3\r\n",
        "ACK,HB\r\n",
    ]
