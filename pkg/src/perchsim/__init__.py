"""perchsim: closed-loop simulator of a self-recharging powerline drone."""

__version__ = "0.1.0"
