import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from startkit import sandbox
from startkit.errors import BridgeClosed, LaunchFailed, NotAtPrompt, PromptTimeout
from startkit.interact import (
    BridgeHandle,
    BridgeState,
    PromptDetector,
    PromptSpec,
    start_interactive,
)

PROMPT = PromptSpec(re.escape(sandbox.FRAMEWORK_PROMPT), quiescence_window=0.05)


@pytest.fixture
def framework(sbx, tmp_path):
    argv = [str(sbx.release_dir / "bin" / "sbx-run"), "-i"]
    log = tmp_path / "inputs.log"
    handle = start_interactive(
        argv, PROMPT, cwd=str(tmp_path),
        env={"PATH": "/usr/bin:/bin", "SBX_INPUT_LOG": str(log)})
    yield handle, log
    handle.stop()


# -- detector ----------------------------------------------------------------

def test_detector_simple_prompt():
    d = PromptDetector(PROMPT)
    d.feed("banner\nask> ")
    assert d.pending


def test_detector_mid_line_decoy_not_pending():
    d = PromptDetector(PROMPT)
    d.feed("the string ask> appears mid-line")
    assert not d.pending
    d.feed("\nreal output\n")
    assert not d.pending


def test_detector_prompt_split_across_chunks():
    d = PromptDetector(PROMPT)
    for chunk in ("greeting\na", "sk", "> "):
        d.feed(chunk)
    assert d.pending


def test_detector_prompt_then_more_output_clears():
    d = PromptDetector(PROMPT)
    d.feed("ask> ")
    assert d.pending
    d.feed("typed\n")
    assert not d.pending


def test_detector_rejects_prompt_with_prefix():
    d = PromptDetector(PROMPT)
    d.feed("NOTE: ask> ")
    assert not d.pending


def test_prompt_spec_rejects_nonpositive_window():
    with pytest.raises(ValueError):
        PromptSpec("x", quiescence_window=0)


@given(cuts=st.lists(st.integers(min_value=0, max_value=40), max_size=6))
@settings(max_examples=200, deadline=None)
def test_detector_chunking_invariant(cuts):
    """Final detector state depends only on total stream, not chunking."""
    stream = "welcome\nsome out ask> decoy\nask> "
    points = sorted({min(c, len(stream)) for c in cuts})
    pieces, last = [], 0
    for p in points:
        pieces.append(stream[last:p])
        last = p
    pieces.append(stream[last:])
    d = PromptDetector(PROMPT)
    for piece in pieces:
        d.feed(piece)
    assert d.pending
    assert d.current_line == "ask> "


# -- live bridge -------------------------------------------------------------

def test_bridge_reaches_prompt(framework):
    handle, _ = framework
    assert handle.state is BridgeState.AtPrompt
    text = "".join(e.text for e in handle.transcript() if e.origin == "stdout")
    assert "sandbox framework 1.0" in text


def test_send_line_returns_command_output(framework):
    handle, _ = framework
    out = handle.send_line("1+1")
    assert out.strip() == "2"
    assert handle.state is BridgeState.AtPrompt


def test_send_empty_line(framework):
    handle, _ = framework
    assert handle.send_line("").strip() == ""
    assert handle.state is BridgeState.AtPrompt


def test_inputs_reach_child_without_loss(framework):
    handle, log = framework
    lines = [f"{i}+{i}" for i in range(1, 6)]
    for line in lines:
        handle.send_line(line)
    handle.stop()
    assert log.read_text().splitlines() == lines + ["quit"]


def test_concurrent_sends_serialized(framework):
    handle, log = framework
    import threading
    results = {}

    def worker(expr):
        results[expr] = handle.send_line(expr).strip()

    threads = [threading.Thread(target=worker, args=(e,))
               for e in ("1+1", "2+2", "3+3")]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == {"1+1": "2", "2+2": "4", "3+3": "6"}


def test_send_when_not_at_prompt_rejected(framework):
    handle, _ = framework
    handle.state = BridgeState.Busy
    try:
        with pytest.raises(NotAtPrompt):
            handle.send_line("1+1")
    finally:
        handle.state = BridgeState.AtPrompt


def test_quit_closes_bridge(framework):
    handle, _ = framework
    code = handle.stop()
    assert code == 0
    assert handle.state is BridgeState.Closed
    with pytest.raises(BridgeClosed):
        handle.send_line("1+1")


def test_stop_idempotent(framework):
    handle, _ = framework
    assert handle.stop() == handle.stop() == 0


def test_launch_failed_for_missing_binary(tmp_path):
    with pytest.raises(LaunchFailed):
        BridgeHandle([str(tmp_path / "no-such-binary")], PROMPT)


def test_prompt_timeout_for_silent_child():
    with pytest.raises(PromptTimeout):
        BridgeHandle(["/bin/sh", "-c", "sleep 5"], PROMPT, prompt_timeout=0.3)


def test_closed_before_prompt_raises_bridge_closed():
    with pytest.raises(BridgeClosed) as exc:
        BridgeHandle(["/bin/sh", "-c", "echo nothing; exit 4"], PROMPT,
                     prompt_timeout=5.0)
    assert exc.value.exit_code == 4
