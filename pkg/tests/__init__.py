# Tests for flora
