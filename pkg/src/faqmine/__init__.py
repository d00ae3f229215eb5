"""faqmine: extract reviewable FAQs from software-development discussions."""

__version__ = "0.1.0"
