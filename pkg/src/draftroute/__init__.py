"""Draft-model routing for speculative decoding, trained offline as a contextual bandit."""
