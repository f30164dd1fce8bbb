"""Vision-guided object-follower robot."""
