"""Private, unlinkable message exchange through a public bulletin board in a
simulated opportunistic network."""

__version__ = "0.1.0"
