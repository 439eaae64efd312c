"""
Theory router - closed-form limits and the balance condition
"""
import logging

from fastapi import APIRouter, HTTPException, status

from app.core.exceptions import RMDGraphError
from app.schemas.schemas import (
    BalanceRequest,
    BalanceResponse,
    LimitCutPrediction,
    LimitRatioCutRequest,
    RankLimitRequest,
    RhoRequest,
)
from app.services import theory_service

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/theory", tags=["theory"])


def _bad_request(e: RMDGraphError) -> HTTPException:
    return HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))


@router.post("/balance", response_model=BalanceResponse)
async def balance(request: BalanceRequest):
    """Which split RatioCut prefers for a cut-ratio q and unbalancedness y"""
    return BalanceResponse(
        preference=theory_service.balance_condition(request.q, request.y),
        threshold=theory_service.balance_threshold(request.y),
    )


@router.post("/rho")
async def rho(request: RhoRequest):
    """Degree modulation factor for a rank limit p and lambda"""
    return {"rho": theory_service.rho(request.p, request.lam)}


@router.post("/rank-limit")
def rank_limit(request: RankLimitRequest):
    """Limit rank p(y) of each point under a Gaussian mixture"""
    try:
        return {"p": theory_service.rank_limit(request.mixture, request.points)}
    except RMDGraphError as e:
        raise _bad_request(e)


@router.post("/limit-ratiocut", response_model=LimitCutPrediction)
def limit_ratiocut(request: LimitRatioCutRequest):
    """Limit of the scaled RatioCut of an axis-aligned hyperplane"""
    try:
        return theory_service.limit_ratiocut(request.mixture, request.axis, request.at, request.lam)
    except RMDGraphError as e:
        raise _bad_request(e)
    except Exception:
        logger.exception("limit-ratiocut failed")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail="Internal error while evaluating the limit"
        )
