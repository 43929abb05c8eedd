import logging

import pytest


@pytest.fixture(autouse=True)
def _restore_logging_disable():
    # The CLI calls logging.disable() process-wide when not verbose; keep that from leaking across tests
    yield
    logging.disable(logging.NOTSET)
