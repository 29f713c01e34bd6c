# rbsim - randomized benchmarking survival curves under non-Markovian dephasing noise

__version__ = "0.1.0"
