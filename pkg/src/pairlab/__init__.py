from pairlab._version import __version__
