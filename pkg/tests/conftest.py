import pytest
import torch

from homonmt import pinyin

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def table():
    return pinyin.default_table()


@pytest.fixture
def small_table():
    return pinyin.SyllableTable.from_pairs([
        ("建", "jian"), ("一", "yi"), ("议", "yi"), ("医", "yi"), ("所", "suo"),
        ("小", "xiao"), ("学", "xue"), ("请", "qing"), ("拼", "pin"), ("写", "xie"),
        ("他", "ta"), ("她", "ta"), ("它", "ta"), ("区", "qu"),
    ])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
