# Tests for numisnet
