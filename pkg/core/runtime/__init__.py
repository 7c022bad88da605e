"""Runtime utilities: errors, retries, random substreams."""
