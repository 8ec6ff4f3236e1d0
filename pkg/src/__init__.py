# To use "meta_learners" library
import os
import sys
sys.path.append(os.path.dirname(__file__))
