# Pricing requests are CPU bound and short
worker_class = 'uvicorn.workers.UvicornWorker'
max_requests = 1000
max_requests_jitter = 50
timeout = 120
keepalive = 2
