import logging

from datetime import datetime

from .models import RunLog


class SQLiteHandler(logging.Handler):
    def __init__(self, sqlite, level=logging.INFO):
        super().__init__(level)

        self.session = sqlite.session
        self.sqlite = sqlite

    def emit(self, message):
        dt = datetime.utcfromtimestamp(message.created)

        row = RunLog(
            module=message.module,
            key=message.levelname.lower(),
            value=message.getMessage(),
            created_on=dt,
            updated_on=dt,
        )

        try:
            self.session.add(row)
            self.session.commit()

        except Exception:
            self.session.rollback()
            self.handleError(message)
