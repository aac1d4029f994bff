import concurrent.futures
import logging
import multiprocessing as mp
import time

from tqdm import tqdm

logger = logging.getLogger(__name__)


## multithreading utilities
def parallel_task(param_list, fun, **kwargs):
    """
    Apply ``fun`` to every parameter dict of ``param_list``, merged with ``kwargs``.

    Results come back in the order of ``param_list``. With ``debug=True`` (or a single
    task) the calls run sequentially; otherwise they run on a thread pool, numpy
    releasing the GIL in the heavy kernels. ``progress=False`` hides the tqdm bar and
    ``max_workers`` caps the pool size.
    """
    desc = kwargs.pop("desc", "parallel…")
    progress = kwargs.pop("progress", True)
    max_workers = kwargs.pop("max_workers", None)
    debug = kwargs.pop("debug", False)
    param_list = [{**p, **kwargs} for p in param_list]
    bar = tqdm(total=len(param_list), desc=desc, ascii=False, ncols=75, disable=not progress)
    if debug or len(param_list) < 2:
        out = []
        for p in param_list:
            out.append(fun(p))
            bar.update()
        bar.close()
        return out
    cores = min(max_workers or mp.cpu_count(), len(param_list))

    out = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=cores) as executor:
        for result in executor.map(fun, param_list):
            out.append(result)
            bar.update()
    bar.close()
    return out


def elapsed_time(fun, msg="elapsed time in seconds:", **kwargs):
    start = time.time()
    out = fun(**kwargs)
    logger.info("%s %.3f", msg, time.time() - start)
    return out
