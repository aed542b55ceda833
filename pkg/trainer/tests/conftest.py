import os

# quiet the framework's startup chatter before anything imports it
os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")
