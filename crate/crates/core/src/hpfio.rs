// placeholder, implemented in later commits
